"""Experiment configuration: one flat, documented, JSON-serialisable record.

Every field has a default; a config file only needs the fields it overrides.
The fingerprint is a stable hash of the complete resolved config and gates
checkpoint reuse across stages.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, fields

from .biodata import SplitSpec, DistortionModel, DatasetDims
from .mdh import LossWeights, ContinuationSchedule, MdhTrainConfig
from .nnd import NndTrainConfig


class ConfigError(ValueError):
    """Raised for structurally invalid configurations."""


@dataclass
class ExperimentConfig:
    # error-correcting code (length n = 2^code_m - 1; hashing width J = n)
    code_m: int = 6
    code_t: int = 3

    # fusion architecture: "fca" | "bla" | "face" | "iris" (last two unimodal)
    fusion_mode: str = "bla"
    feature_dim: int = 16          # per-modality encoder output d
    fusion_dim: int = 128          # fused representation width f
    encoder_hidden: tuple = (128, 64)

    # composite loss weights
    w_cls: float = 1.0
    w_quant: float = 0.1
    w_ent: float = 0.1
    l2: float = 1e-4

    # continuation ladder for the hashing tanh bandwidth
    bandwidths: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    eps_loss: float = 1e-4
    patience: int = 200
    stage_max_steps: int = 400

    # hashing-network optimisation
    lr: float = 1e-3
    batch_size: int = 32
    phase_a_steps: int = 300
    phase_c_lr_factor: float = 0.1

    # decoder network
    nnd_iterations: int = 5
    nnd_snr_range_db: tuple = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    nnd_batch_size: int = 64
    nnd_pretrain_steps: int = 300
    nnd_finetune_steps: int = 200
    nnd_step_size: float = 1e-3
    # gain mapping hash activations to LLRs; saturated hash codes carry no
    # per-bit reliability, so a conservative gain keeps message passing from
    # overriding the channel on off-lattice inputs
    llr_scale: float = 2.0

    # end-to-end joint optimisation
    joint_steps: int = 150
    joint_step_size: float = 1e-4
    joint_batch_size: int = 32
    joint_freeze_mdh: bool = False
    joint_freeze_nnd: bool = False

    # synthetic benchmark
    train_subjects: int = 120
    nnd_subjects: int = 60
    test_subjects: int = 70
    samples_per_subject: int = 20
    enroll_fraction: float = 0.5
    latent_dim: int = 32
    face_dim: int = 64
    iris_dim: int = 64
    sigma_face: float = 0.08
    sigma_iris: float = 0.08
    gain_jitter: float = 0.05
    offset_sigma: float = 0.05

    # evaluation
    far_targets: tuple = (0.01, 0.001, 0.0001)
    score_on: str = "codeword"     # "codeword" (all n bits) or "message" (first k)
    gt_max_failure_rate: float = 0.98

    # master seed; every stage derives its own stream from it
    seed: int = 42

    def __post_init__(self):
        if self.fusion_mode not in ("fca", "bla", "face", "iris"):
            raise ConfigError(f"unknown fusion_mode '{self.fusion_mode}'")
        if self.score_on not in ("codeword", "message"):
            raise ConfigError(f"score_on must be 'codeword' or 'message', got '{self.score_on}'")
        if not 0.0 < self.gt_max_failure_rate <= 1.0:
            raise ConfigError("gt_max_failure_rate must lie in (0, 1]")
        for name in ("bandwidths", "encoder_hidden", "nnd_snr_range_db", "far_targets"):
            setattr(self, name, tuple(getattr(self, name)))
        # constructing these validates their invariants (ranges, overlap, order)
        self.split_spec()
        self.distortion()
        self.loss_weights()
        self.schedule()

    # -- component views -----------------------------------------------------
    def split_spec(self):
        return SplitSpec(self.train_subjects, self.nnd_subjects, self.test_subjects,
                         self.samples_per_subject, self.enroll_fraction)

    def distortion(self):
        return DistortionModel(self.sigma_face, self.sigma_iris,
                               self.gain_jitter, self.offset_sigma)

    def dims(self):
        return DatasetDims(self.latent_dim, self.face_dim, self.iris_dim)

    def loss_weights(self):
        return LossWeights(self.w_cls, self.w_quant, self.w_ent, self.l2)

    def schedule(self):
        return ContinuationSchedule(self.bandwidths, self.eps_loss,
                                    self.patience, self.stage_max_steps)

    def mdh_train_config(self, seed):
        return MdhTrainConfig(self.lr, self.batch_size, self.phase_a_steps,
                              self.phase_c_lr_factor, seed=seed)

    def nnd_train_config(self, seed, steps=None):
        return NndTrainConfig(
            snr_range_db=self.nnd_snr_range_db,
            batch_size=self.nnd_batch_size,
            steps=self.nnd_pretrain_steps if steps is None else steps,
            step_size=self.nnd_step_size,
            seed=seed,
        )

    def code_name(self):
        n = (1 << self.code_m) - 1
        return f"BCH(n={n}, m={self.code_m}, t={self.code_t})"

    # -- serialisation ---------------------------------------------------------
    def to_dict(self):
        return asdict(self)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                mapping = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(mapping)
