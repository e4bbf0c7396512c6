"""setup for ice_gan."""
import setuptools

with open("README.md", "rb") as fh:
    long_description = fh.read().decode("UTF-8")


# Extract code version from ice_gan.py
def get_version():
    """Get package version."""
    with open('ice_gan/ice_gan.py') as f:
        for line in f.readlines():
            if "__version__" in line:
                return line.split('"')[1]


setuptools.setup(
    name="ice_gan",
    version=get_version(),
    author="The ice_gan developers",
    description=("Identity-aware capsule GAN for micro-expression synthesis "
                 "and recognition."),
    keywords='micro-expressions generative-adversarial-networks capsules',
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["test", "examples*"]),
    install_requires=[
        'numpy',
        'scipy',
        'h5py',
        'matplotlib',
        'cycler',
        'packaging',
        'pandas',
        'scikit-learn',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': ['ice_gan=ice_gan.cli:main'],
    },
    classifiers=[
        "Intended Audience :: Science/Research",
        "Natural Language :: English",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Operating System :: OS Independent",
    ],
)
