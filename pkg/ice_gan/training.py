"""
Alternating adversarial training of the generator and the discriminator.

Every batch runs one discriminator step followed by one generator step:

- D minimizes lambda_adv * d_term + lambda_mer * L_cls on the real apex
  frames (neighbor frames included) and on the detached synthetic faces.
  After the warm-up, the synthetic faces also enter L_cls with the class
  they were conditioned on.
- G minimizes lambda_adv * g_term + lambda_mes * L_ip.

The learning rate follows a cosine schedule over the epochs. Shuffling and
noise are drawn from a generator seeded with (seed, epoch), so that a
resumed run replays the remaining epochs exactly.
"""
import os
import json
import numpy as np
import pandas as pd
from .checkpoint import (entries_for_prefix, load_checkpoint,
                         registry_entries, save_checkpoint)
from .generator import Generator, NUM_CLASSES, embedding_similarity
from .ice_gan import build_discriminator
from .load_data import augment_corpus, stack_samples
from .losses import (LossWeights, PerceptualNet, gan_discriminator_term,
                     gan_generator_term, l_ip, l_perceptual,
                     total_objective)
from .metrics import ConfusionMatrix, MetricsReport, locality_iou, norm2_diff
from .optim import (LrSchedule, adam_step, cosine_lr,
                    get_default_adam_kwargs)
from .tensor import Tensor, add, backward, mul
from .utils import (check_choice, check_kwargs_and_set_defaults,
                    debug_message, get_rng, one_hot, progress_message)

LOSS_COLUMNS = ["epoch", "step", "d_adv", "g_adv", "l_pixel", "l_per",
                "l_margin", "l_rec", "l_cls", "lr"]


def get_default_training_kwargs():
    """Defaults for Trainer training_kwargs.

    lr, min_lr: float
        Cosine schedule from lr at the first epoch towards min_lr.
    batch_size, epochs: int
    seed: int
        Seeds model initialization, shuffling and noise.
    beta1, beta2, eps: float
        Adam constants.
    warmup_epochs: int
        Epochs before synthetic faces enter the classification loss.
    checkpoint_every: int
        Checkpoint period in epochs. The initial and final models are
        always saved.
    pixel_target: str
        "apex" or "onset", the target of L_pixel.
    perceptual_target: str
        "onset" or "apex", the target of L_per.
    use_neighbors: bool
        Add the four neighbor frames of every apex as extra real samples.
        They do not serve as L_pixel targets.
    perceptual_seed: int
    perceptual_widths: list of 4 ints
        Seed and widths of the fixed perceptual feature extractor.
    debug_level: int
    verbose: bool
    debug_plots: bool
        Save loss curves and synthetic triplets into the run directory.
    """
    return {"lr": 1e-3,
            "min_lr": 0.0,
            "batch_size": 16,
            "epochs": 100,
            "seed": 0,
            **get_default_adam_kwargs(),
            "warmup_epochs": 10,
            "checkpoint_every": 10,
            "pixel_target": "apex",
            "perceptual_target": "onset",
            "use_neighbors": True,
            "perceptual_seed": 1234,
            "perceptual_widths": [8, 16, 32, 64],
            "debug_level": 0,
            "verbose": False,
            "debug_plots": False}


def get_available_loss_targets():
    return ["apex", "onset"]


def checkpoint_name(epoch):
    return f"checkpoint_epoch{epoch:03d}.iceg"


class Trainer:
    """Holds G, D, the perceptual network and the training state."""

    def __init__(self, generator_kwargs=None, discriminator="capsule",
                 discriminator_kwargs=None, loss_weights=None,
                 training_kwargs=None):
        """Init Trainer.

        parameters:
        -----------
        generator_kwargs: dict
            See `ice_gan.generator.get_default_generator_kwargs`.
        discriminator: str
            One of `ice_gan.get_available_discriminators()`.
        discriminator_kwargs: dict
            See `ice_gan.discriminator.get_default_discriminator_kwargs`.
        loss_weights: LossWeights or dict
        training_kwargs: dict
            See `get_default_training_kwargs`.
        """
        self.training_kwargs = check_kwargs_and_set_defaults(
            training_kwargs, get_default_training_kwargs(),
            "training kwargs",
            "ice_gan.training.get_default_training_kwargs()")
        kw = self.training_kwargs
        check_choice(kw["pixel_target"], get_available_loss_targets(),
                     "pixel_target")
        check_choice(kw["perceptual_target"], get_available_loss_targets(),
                     "perceptual_target")
        for key in ["batch_size", "checkpoint_every"]:
            if kw[key] < 1:
                raise ValueError(f"{key} must be >= 1, got {kw[key]}")
        for key in ["epochs", "warmup_epochs"]:
            if kw[key] < 0:
                raise ValueError(f"{key} must be >= 0, got {kw[key]}")
        if loss_weights is None:
            loss_weights = LossWeights()
        elif isinstance(loss_weights, dict):
            loss_weights = LossWeights.from_dict(loss_weights)
        self.weights = loss_weights
        self.seed = kw["seed"]
        self.generator = Generator(generator_kwargs, seed=self.seed)
        self.discriminator = build_discriminator(discriminator,
                                                 discriminator_kwargs,
                                                 seed=self.seed + 1)
        if self.generator.image_size != self.discriminator.image_size:
            raise ValueError(f"Generator image size "
                             f"{self.generator.image_size} differs from "
                             "discriminator image size "
                             f"{self.discriminator.image_size}")
        self.perceptual = PerceptualNet(kw["perceptual_seed"],
                                        kw["perceptual_widths"])
        self.schedule = LrSchedule(kw["lr"], kw["epochs"], kw["min_lr"])
        self.epoch = 0
        self.history = []

    @property
    def debug_level(self):
        return self.training_kwargs["debug_level"]

    def _adam(self, registry, lr):
        kw = self.training_kwargs
        return adam_step(registry, lr, kw["beta1"], kw["beta2"], kw["eps"],
                         self.debug_level)

    def _check_finite(self, value, what, epoch, step):
        if not np.isfinite(value):
            raise FloatingPointError(
                f"Non-finite {what} ({value}) at epoch {epoch}, step {step}. "
                "The last checkpoint of the run is kept.")

    def train_step(self, batch, lr, epoch=1, step=0, rng=None):
        """One D step and one G step on `batch`.

        parameters:
        -----------
        batch: list of Sample
        lr: float
            Learning rate of both Adam updates.
        epoch, step: int
            Position in the run, for logging and the warm-up.
        rng:
            Seed or numpy Generator of the noise.

        returns:
        --------
        dict of logged loss values.
        """
        kw = self.training_kwargs
        G, D, weights = self.generator, self.discriminator, self.weights
        onsets, apexes, labels = stack_samples(batch)
        is_apex = np.array([s.apex_neighbor_index == 0 for s in batch],
                           dtype=np.float64)
        c = one_hot(labels, NUM_CLASSES)
        z = G.sample_noise(len(batch), get_rng(rng))
        x_syn = G.forward(Tensor(onsets), c, z)
        x_fake = x_syn.detach()

        # D step
        real = D.discriminate(apexes)
        fake = D.discriminate(x_fake)
        d_term = gan_discriminator_term(real.adv, fake.adv)
        cls, parts = D.classification_loss(real, labels, apexes, weights)
        if epoch > kw["warmup_epochs"]:
            cls_fake, _ = D.classification_loss(fake, labels, x_fake.data,
                                                weights)
            cls = add(cls, cls_fake)
        d_objective = total_objective(d_term, None, cls, weights)
        self._check_finite(d_objective.item(), "discriminator objective",
                           epoch, step)
        D.registry.zero_grad()
        backward(d_objective)
        self._adam(D.registry, lr)

        # G step
        fake = D.discriminate(x_syn)
        g_term = gan_generator_term(fake.adv)
        pixel_target = apexes if kw["pixel_target"] == "apex" else onsets
        perceptual_target = (onsets if kw["perceptual_target"] == "onset"
                             else apexes)
        if is_apex.sum() > 0:
            ip, pixel, per = l_ip(x_syn, pixel_target, perceptual_target,
                                  self.perceptual, weights.alpha, is_apex)
        else:
            # neighbor frames only: no pixel target in this batch
            per = l_perceptual(perceptual_target, x_syn, self.perceptual)
            ip = mul(per, weights.alpha)
            pixel = Tensor(0.0)
        g_objective = total_objective(g_term, ip, None, weights)
        self._check_finite(g_objective.item(), "generator objective", epoch,
                           step)
        G.registry.zero_grad()
        backward(g_objective)
        self._adam(G.registry, lr)
        D.registry.zero_grad()
        G.registry.zero_grad()

        return {"epoch": epoch, "step": step, "d_adv": d_term.item(),
                "g_adv": g_term.item(), "l_pixel": pixel.item(),
                "l_per": per.item(), "l_margin": parts["l_margin"],
                "l_rec": parts["l_rec"], "l_cls": cls.item(), "lr": lr}

    def training_pool(self, samples):
        if self.training_kwargs["use_neighbors"]:
            return augment_corpus([s for s in samples
                                   if s.apex_neighbor_index == 0])
        return list(samples)

    def train_epoch(self, pool, epoch):
        """Shuffle `pool` and run `train_step` on each of its batches."""
        kw = self.training_kwargs
        rng = np.random.default_rng([self.seed, epoch])
        lr = cosine_lr(epoch - 1, self.schedule)
        order = rng.permutation(len(pool))
        records = []
        for step, start in enumerate(range(0, len(pool), kw["batch_size"])):
            batch = [pool[i] for i in order[start:start + kw["batch_size"]]]
            records.append(self.train_step(batch, lr, epoch, step, rng))
        self.history.extend(records)
        self.epoch = epoch
        return records

    def fit(self, samples, run_dir=None):
        """Train on `samples` for the remaining epochs.

        parameters:
        -----------
        samples: list of Sample
            Training samples (apex frames; neighbors are added here when
            use_neighbors is set).
        run_dir: str
            If given, checkpoints, the loss log and the diagnostics are
            written there.

        returns:
        --------
        self
        """
        kw = self.training_kwargs
        if len(samples) == 0:
            raise ValueError("Cannot train on an empty sample list.")
        pool = self.training_pool(samples)
        if run_dir is not None:
            os.makedirs(run_dir, exist_ok=True)
            if self.epoch == 0:
                self.save(os.path.join(run_dir, checkpoint_name(0)))
        for epoch in range(self.epoch + 1, kw["epochs"] + 1):
            records = self.train_epoch(pool, epoch)
            progress_message(
                f"Epoch {epoch}/{kw['epochs']}: d_adv "
                f"{np.mean([r['d_adv'] for r in records]):.4f}, g_adv "
                f"{np.mean([r['g_adv'] for r in records]):.4f}, l_pixel "
                f"{np.mean([r['l_pixel'] for r in records]):.4f}, lr "
                f"{records[0]['lr']:.2e}", kw["verbose"])
            if run_dir is not None and (epoch % kw["checkpoint_every"] == 0
                                        or epoch == kw["epochs"]):
                self.save(os.path.join(run_dir, checkpoint_name(epoch)))
                self.write_loss_log(os.path.join(run_dir, "losses.csv"))
        if run_dir is not None:
            self.save(os.path.join(run_dir, "final.iceg"))
            self.write_loss_log(os.path.join(run_dir, "losses.csv"))
            diagnostics = self.diagnostics(samples)
            with open(os.path.join(run_dir, "diagnostics.json"), "w") as f:
                json.dump(diagnostics, f, indent=2)
            if kw["debug_plots"]:
                from .plots import plot_loss_curves, plot_class_triplet
                plot_loss_curves(self.loss_frame(),
                                 os.path.join(run_dir, "losses.pdf"))
                plot_class_triplet(
                    samples[0].onset,
                    self.generator.synthesize_all_classes(
                        samples[0].onset[None], rng=self.seed),
                    os.path.join(run_dir, "triplet.pdf"))
        return self

    def loss_frame(self):
        return pd.DataFrame(self.history, columns=LOSS_COLUMNS)

    def write_loss_log(self, fname):
        self.loss_frame().to_csv(fname, index=False)
        return fname

    def checkpoint_entries(self):
        entries = registry_entries(self.generator.registry, "generator")
        entries.update(registry_entries(self.discriminator.registry,
                                        "discriminator"))
        entries["run:epoch"] = np.array(float(self.epoch))
        return entries

    def save(self, fname):
        save_checkpoint(fname, self.checkpoint_entries())
        progress_message(f"Checkpoint saved to {fname}",
                         self.training_kwargs["verbose"])
        return fname

    def load(self, fname, history_file=None):
        """Restore G, D, their Adam state and the epoch from a checkpoint.

        With `history_file` (a loss CSV of the same run), the loss records
        up to the restored epoch are reloaded too.
        """
        entries = load_checkpoint(fname)
        self.generator.registry.load_state_dict(
            entries_for_prefix(entries, "generator"))
        self.discriminator.registry.load_state_dict(
            entries_for_prefix(entries, "discriminator"))
        self.epoch = int(entries["run:epoch"]) if "run:epoch" in entries \
            else 0
        self.history = []
        if history_file is not None and os.path.exists(history_file):
            frame = pd.read_csv(history_file)
            frame = frame[frame["epoch"] <= self.epoch]
            self.history = frame.to_dict("records")
        return self

    def predict(self, samples, batch_size=None):
        """Predicted class indices of the apex frames of `samples`."""
        batch_size = batch_size or self.training_kwargs["batch_size"]
        predictions = []
        for start in range(0, len(samples), batch_size):
            _, apexes, _ = stack_samples(samples[start:start + batch_size])
            predictions.append(self.discriminator.predict(apexes))
        if not predictions:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(predictions).astype(np.int64)

    def evaluate(self, samples):
        """MetricsReport of the discriminator on `samples`."""
        true = [s.class_index for s in samples]
        return MetricsReport.from_confusion(
            ConfusionMatrix.from_labels(true, self.predict(samples)))

    def diagnostics(self, samples, max_onsets=8):
        """Mode-collapse, identity and locality diagnostics of the generator.

        collapse_l1: per class, mean pairwise L1 distance between faces
            synthesized from different onsets.
        embedding_similarity: mean cosine similarity between the
            embeddings of an onset and of a face synthesized from it.
        patch_iou: per class, mean IoU between the top 5% of the difference
            map to the onset and the subject's known patch of that class;
            None when no sample carries a patch for the class.
        """
        onsets, subjects = [], []
        for s in samples:
            if s.subject_key not in subjects:
                subjects.append(s.subject_key)
                onsets.append(s.onset)
            if len(onsets) == max_onsets:
                break
        patches = {(s.subject_key, s.class_index): s.patch_mask
                   for s in samples if s.patch_mask is not None}
        onsets = np.stack(onsets)
        rng = np.random.default_rng([self.seed, 2**16])
        collapse, patch_iou = {}, {}
        similarities = []
        for k in range(NUM_CLASSES):
            synthetic = self.generator.synthesize(
                onsets, np.full(len(onsets), k), rng)
            pairs = [np.mean(np.abs(synthetic[i] - synthetic[j]))
                     for i in range(len(onsets))
                     for j in range(i + 1, len(onsets))]
            collapse[k] = float(np.mean(pairs)) if pairs else 0.0
            similarities += [embedding_similarity(self.generator,
                                                  onsets[i:i + 1],
                                                  synthetic[i:i + 1])
                             for i in range(len(onsets))]
            ious = [locality_iou(norm2_diff(synthetic[i], onsets[i]),
                                 patches[(subject, k)])
                    for i, subject in enumerate(subjects)
                    if (subject, k) in patches]
            patch_iou[k] = float(np.mean(ious)) if ious else None
        report = {"collapse_l1": collapse,
                  "embedding_similarity": float(np.mean(similarities)),
                  "patch_iou": patch_iou,
                  "epoch": self.epoch}
        if len(onsets) > 1 and min(collapse.values()) <= 0.01:
            debug_message(f"Synthetic faces look collapsed: per-class mean "
                          f"pairwise L1 {collapse}", self.debug_level)
        return report


def loso_trainer_factory(trainer_kwargs=None, run_root=None):
    """Model factory for `metrics.evaluate_loso` training a Trainer per fold.

    parameters:
    -----------
    trainer_kwargs: dict
        Keyword arguments of `Trainer`.
    run_root: str
        If given, every fold writes its run into
        run_root/fold_<dataset>_<subject>.
    """
    trainer_kwargs = trainer_kwargs or {}

    def factory(split, train_samples):
        trainer = Trainer(**trainer_kwargs)
        run_dir = None
        if run_root is not None:
            run_dir = os.path.join(run_root,
                                   "fold_" + split.held_out.replace(":", "_"))
        return trainer.fit(train_samples, run_dir)
    return factory
