import os
import numpy as np
import pytest
from ice_gan.convolution import ConvSpec
from ice_gan.graph_reasoning import (GraphReasoningModule, SupernodeFeatures,
                                     dump_graphs, gcn_update, load_graph,
                                     get_available_inverse_projections,
                                     similarity_map, supernode_transform)
from ice_gan.layers import Conv2d, ParamRegistry
from ice_gan.tensor import Tensor


def _delta_transform(channels):
    """Channel-preserving k3 s2 p1 conv with a centered delta kernel."""
    conv = Conv2d(ParamRegistry("t"), "transform",
                  ConvSpec(channels, channels, 3, 2, 1), 0)
    weight = np.zeros(conv.weight.shape)
    for c in range(channels):
        weight[c, c, 1, 1] = 1.0
    conv.weight.data = weight
    return conv


def test_supernode_transform():
    """A delta kernel makes the supernodes a strided subsampling of f."""
    f = np.random.default_rng(0).standard_normal((1, 2, 4, 4))
    supernodes = supernode_transform(Tensor(f), _delta_transform(2))
    assert supernodes.fhat.shape == (1, 2, 4)
    assert supernodes.num_supernodes == 4
    np.testing.assert_allclose(supernodes.fhat.data,
                               f[:, :, ::2, ::2].reshape(1, 2, 4))
    with pytest.raises(ValueError):
        supernode_transform(Tensor(np.ones((1, 2, 3, 3))),
                            _delta_transform(2))


def test_similarity_map_identity_maps():
    eye = Tensor(np.eye(2))
    supernodes = SupernodeFeatures(Tensor(np.eye(2)[None]), (2, 2, 2))
    M = similarity_map(supernodes, eye, eye)
    np.testing.assert_allclose(M.data[0], np.eye(2) / np.sqrt(2))

    fhat = np.random.default_rng(1).standard_normal((1, 3, 5))
    M = similarity_map(SupernodeFeatures(Tensor(fhat), (3, 2, 10)),
                       Tensor(np.eye(3)), Tensor(np.eye(3))).data[0]
    np.testing.assert_array_equal(M, M.T)
    assert np.all(np.linalg.eigvalsh(M) >= -1e-12)


def test_gcn_update():
    """With A = 0 and W = I only the relu acts."""
    A, W = Tensor(np.zeros((2, 2))), Tensor(np.eye(2))
    M = np.array([[[0.5, 0.2], [0.2, 0.1]]])
    np.testing.assert_allclose(gcn_update(Tensor(M), A, W).data, M)
    M[0, 0, 1] = -0.3
    out = gcn_update(Tensor(M), A, W).data
    assert out[0, 0, 1] == 0.0
    assert out[0, 1, 0] == 0.2


def test_similarity_map_matches_naive_loops():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n, c, ns = rng.integers(1, 3), rng.integers(1, 5), rng.integers(1, 7)
        fhat = rng.standard_normal((n, c, ns))
        phi, theta = rng.standard_normal((2, c, c))
        M = similarity_map(SupernodeFeatures(Tensor(fhat), (c, 2, 2 * ns)),
                           Tensor(phi), Tensor(theta)).data
        expected = np.zeros((n, c, c))
        for s in range(n):
            for j in range(c):
                for k in range(c):
                    total = 0.0
                    for m in range(ns):
                        left = sum(phi[j, a] * fhat[s, a, m] for a in range(c))
                        right = sum(theta[k, b] * fhat[s, b, m]
                                    for b in range(c))
                        total += left * right
                    expected[s, j, k] = total / np.sqrt(ns)
        assert np.max(np.abs(M - expected)) < 1e-10


def test_gcn_update_matches_naive_loops():
    rng = np.random.default_rng(22)
    for _ in range(100):
        n, c = rng.integers(1, 3), rng.integers(1, 5)
        M = rng.standard_normal((n, c, c))
        A, W = rng.standard_normal((2, c, c))
        out = gcn_update(Tensor(M), Tensor(A), Tensor(W)).data
        loops = A + np.eye(c)
        expected = np.zeros((n, c, c))
        for s in range(n):
            for j in range(c):
                for k in range(c):
                    total = sum(loops[j, a] * M[s, a, b] * W[b, k]
                                for a in range(c) for b in range(c))
                    expected[s, j, k] = max(0.0, total)
        assert np.max(np.abs(out - expected)) < 1e-10


def test_module_preserves_shape():
    """GRM maps (N, C, H, W) to itself for every inverse projection."""
    x = np.random.default_rng(2).standard_normal((2, 3, 8, 8))
    for projection in get_available_inverse_projections():
        module = GraphReasoningModule(
            ParamRegistry("g"), "grm", 3, 0,
            {"inverse_projection": projection})
        assert module(Tensor(x)).shape == x.shape
        M = module.last_graph["M"]
        assert M.shape == (2, 3, 3)
    with pytest.raises(ValueError):
        GraphReasoningModule(ParamRegistry("g"), "grm", 3, 0,
                             {"inverse_projection": "pooling"})


def test_reduce_to_skip_returns_input():
    x = np.random.default_rng(3).standard_normal((1, 4, 4, 4))
    for projection in get_available_inverse_projections():
        module = GraphReasoningModule(
            ParamRegistry("g"), "grm", 4, 1,
            {"inverse_projection": projection})
        module.reduce_to_skip()
        np.testing.assert_array_equal(module(Tensor(x)).data, x)


def test_dump_graphs(tmp_path):
    modules = [GraphReasoningModule(ParamRegistry("g"), f"skip{i}/grm", 2, i)
               for i in range(2)]
    modules[0](Tensor(np.ones((1, 2, 4, 4))))
    fnames = dump_graphs(modules, os.path.join(tmp_path, "graphs"))
    assert [os.path.basename(f) for f in fnames] == ["skip0_grm.graph"]
    M, M_hat = load_graph(fnames[0])
    np.testing.assert_array_equal(M, modules[0].last_graph["M"])
    np.testing.assert_array_equal(M_hat, modules[0].last_graph["M_hat"])
    assert M_hat.shape == (1, 2, 2)
    with open(fnames[0], "ab") as f:
        f.write(b"\x00")
    with pytest.raises(ValueError):
        load_graph(fnames[0])
