"""Pipeline stages over a run directory: data, hashing net, ground truth,
decoder training, joint optimisation, evaluation, and latency benchmarks.

Each stage records a marker in ``state.json`` keyed to the config
fingerprint; a stage refuses to run until its predecessors' markers are
present, and markers from a different fingerprint are ignored. All
randomness derives from the single config seed, fanned out per stage.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bch import build_code, decode_hard, write_descriptor
from .biodata import generate, save_dataset, load_dataset, write_manifest, verify_disjoint
from .checkpoint import save_params, load_params
from .config import ExperimentConfig
from .evaluation import (
    bench_authentication,
    gar_at_far,
    hamming,
    identification_accuracy,
    roc_and_eer,
    score_protocol,
    write_metrics,
    write_roc_csv,
)
from .mdh import MdhModel, train_step1, evaluate_hashing
from .nnd import (
    GroundTruthTable,
    NndModel,
    finetune_biometric,
    hard_limit,
    llr_from_activations,
    make_ground_truth,
    pretrain_awgn,
    sweep_llr_scale,
)

STAGE_ORDER = ("data", "mdh", "ground_truth", "nnd", "joint")
STAGE_COMMAND = {
    "data": "generate-data",
    "mdh": "train-mdh",
    "ground_truth": "ground-truth",
    "nnd": "train-nnd",
    "joint": "joint-optimize",
}
VARIANTS = ("mdh", "ext", "nnd", "mdhnd")
_VARIANT_NEEDS = {
    "mdh": ("data", "mdh"),
    "ext": ("data", "mdh"),
    "nnd": ("data", "mdh", "ground_truth", "nnd"),
    "mdhnd": ("data", "mdh", "ground_truth", "nnd", "joint"),
}


class PipelineError(RuntimeError):
    """Raised when a stage cannot run (gating, refusals, hard failures)."""


def stage_seed(cfg: ExperimentConfig, name):
    """Deterministic per-stage seed derived from the master seed."""
    idx = {"data": 0, "mdh": 1, "ground_truth": 2, "nnd_pre": 3,
           "nnd_ft": 4, "joint": 5}[name]
    return int(np.random.SeedSequence([cfg.seed, idx]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# run-directory state
# ---------------------------------------------------------------------------

def _state_path(run_dir):
    return os.path.join(run_dir, "state.json")


def load_state(run_dir, cfg):
    path = _state_path(run_dir)
    if not os.path.exists(path):
        return {"fingerprint": cfg.fingerprint(), "markers": {}}
    with open(path) as fh:
        state = json.load(fh)
    if state.get("fingerprint") != cfg.fingerprint():
        # markers from another config must not gate this one
        return {"fingerprint": cfg.fingerprint(), "markers": {}}
    return state


def save_state(run_dir, state):
    with open(_state_path(run_dir), "w") as fh:
        json.dump(state, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mark(run_dir, cfg, stage):
    state = load_state(run_dir, cfg)
    state["markers"][stage] = True
    save_state(run_dir, state)


def _require(run_dir, cfg, *stages):
    state = load_state(run_dir, cfg)
    for stage in stages:
        if not state["markers"].get(stage):
            raise PipelineError(
                f"stage '{stage}' has not run for this config; "
                f"run '{STAGE_COMMAND[stage]}' first"
            )


def _log_event(run_dir, text):
    with open(os.path.join(run_dir, "experiment.log"), "a") as fh:
        fh.write(text.rstrip("\n") + "\n")


def _data_paths(run_dir):
    return {name: os.path.join(run_dir, f"data_{name}.txt") for name in ("train", "nnd", "test")}


def _load_splits(cfg, run_dir):
    paths = _data_paths(run_dir)
    splits = {name: load_dataset(p) for name, p in paths.items()}
    verify_disjoint(list(splits.values()))
    return splits


# ---------------------------------------------------------------------------
# model checkpoints
# ---------------------------------------------------------------------------

def _mdh_meta(cfg: ExperimentConfig, model: MdhModel):
    return {
        "kind": "mdh",
        "fingerprint": cfg.fingerprint(),
        "code_m": cfg.code_m,
        "code_t": cfg.code_t,
        "fusion_mode": model.mode,
        "face_dim": cfg.face_dim,
        "iris_dim": cfg.iris_dim,
        "num_classes": model.num_classes,
        "code_bits": model.code_bits,
        "feature_dim": cfg.feature_dim,
        "fusion_dim": cfg.fusion_dim,
        "encoder_hidden": list(cfg.encoder_hidden),
        "beta": model.hashing.beta,
        "has_head": model.has_head,
    }


def save_mdh(path, cfg, model):
    save_params(path, model.parameters(), _mdh_meta(cfg, model))


def load_mdh(path, cfg: ExperimentConfig):
    params, meta = load_params(path)
    _check_compat(meta, cfg)
    model = MdhModel(
        meta["fusion_mode"], meta["face_dim"], meta["iris_dim"], meta["num_classes"],
        meta["code_bits"], meta["feature_dim"], meta["fusion_dim"],
        tuple(meta["encoder_hidden"]),
    )
    model.hashing.beta = meta["beta"]
    if not meta["has_head"]:
        model.discard_head()
    for name, tensor in model.parameters().items():
        tensor.data = params[name].copy()
    return model


def save_nnd(path, cfg, model: NndModel, kind):
    meta = {
        "kind": kind,
        "fingerprint": cfg.fingerprint(),
        "code_m": cfg.code_m,
        "code_t": cfg.code_t,
        "fusion_mode": cfg.fusion_mode,
        "iterations": model.iterations,
    }
    save_params(path, model.parameters(), meta)


def load_nnd(path, cfg: ExperimentConfig, code):
    params, meta = load_params(path)
    _check_compat(meta, cfg)
    model = NndModel(code, meta["iterations"])
    for name, tensor in model.parameters().items():
        tensor.data = params[name].copy()
    return model


def _check_compat(meta, cfg: ExperimentConfig):
    if meta["code_m"] != cfg.code_m or meta["code_t"] != cfg.code_t:
        raise PipelineError(
            f"checkpoint was built for code m={meta['code_m']}, t={meta['code_t']} "
            f"but the config selects m={cfg.code_m}, t={cfg.code_t}"
        )
    if meta.get("fusion_mode") not in (None, cfg.fusion_mode):
        raise PipelineError(
            f"checkpoint fusion mode '{meta['fusion_mode']}' differs from "
            f"config fusion mode '{cfg.fusion_mode}'"
        )


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_generate_data(cfg: ExperimentConfig, run_dir, overwrite=False):
    os.makedirs(run_dir, exist_ok=True)
    paths = _data_paths(run_dir)
    existing = [p for p in paths.values() if os.path.exists(p)]
    if existing and not overwrite:
        raise PipelineError(
            f"dataset files already exist (e.g. {existing[0]}); pass overwrite to replace them"
        )
    cfg.save(os.path.join(run_dir, "config.json"))
    splits = generate(cfg.split_spec(), cfg.distortion(), cfg.dims(), stage_seed(cfg, "data"))
    for split in splits:
        save_dataset(split, paths[split.name])
    manifest = write_manifest(
        os.path.join(run_dir, "data_manifest.json"),
        cfg.split_spec(), cfg.distortion(), cfg.dims(), stage_seed(cfg, "data"), paths,
    )
    _mark(run_dir, cfg, "data")
    return manifest


def stage_train_mdh(cfg: ExperimentConfig, run_dir):
    _require(run_dir, cfg, "data")
    splits = _load_splits(cfg, run_dir)
    code = build_code(cfg.code_m, cfg.code_t)
    write_descriptor(code, os.path.join(run_dir, "code_descriptor.txt"))
    model = MdhModel(
        cfg.fusion_mode, cfg.face_dim, cfg.iris_dim, cfg.train_subjects, code.n,
        cfg.feature_dim, cfg.fusion_dim, cfg.encoder_hidden, seed=stage_seed(cfg, "mdh"),
    )
    model, log = train_step1(
        model, splits["train"], cfg.loss_weights(), cfg.schedule(),
        cfg.mdh_train_config(stage_seed(cfg, "mdh")),
    )
    with open(os.path.join(run_dir, "mdh_log.jsonl"), "w") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    save_mdh(os.path.join(run_dir, "mdh.ckpt"), cfg, model)
    _mark(run_dir, cfg, "mdh")
    return log[-1]


def _activations(model: MdhModel, split, batch=512):
    acts = []
    with ad.no_grad():
        for i in range(0, split.num_samples, batch):
            a, _ = model.forward(split.face[i : i + batch], split.iris[i : i + batch])
            acts.append(a.data)
    return np.concatenate(acts)


def stage_ground_truth(cfg: ExperimentConfig, run_dir):
    _require(run_dir, cfg, "mdh")
    splits = _load_splits(cfg, run_dir)
    model = load_mdh(os.path.join(run_dir, "mdh.ckpt"), cfg)
    code = build_code(cfg.code_m, cfg.code_t)
    nnd_split = splits["nnd"]
    acts = _activations(model, nnd_split)
    by_subject = {int(s): acts[nnd_split.subject == s] for s in nnd_split.subject_ids}
    table = make_ground_truth(by_subject, code)
    rate = table.failure_rate
    _log_event(run_dir, f"ground_truth failure_rate={rate!r} "
                        f"labeled={len(table.labels)} excluded={len(table.excluded)}")
    if rate > cfg.gt_max_failure_rate:
        diag = {s: f"{table.failures[s]}/{table.totals[s]} failed" for s in table.excluded[:10]}
        raise PipelineError(
            f"ground-truth decode failure rate {rate:.3f} exceeds the "
            f"gt_max_failure_rate gate {cfg.gt_max_failure_rate}; worst subjects: {diag}"
        )
    table.save(os.path.join(run_dir, "ground_truth.txt"))
    _mark(run_dir, cfg, "ground_truth")
    return table


def stage_train_nnd(cfg: ExperimentConfig, run_dir):
    _require(run_dir, cfg, "ground_truth")
    splits = _load_splits(cfg, run_dir)
    table = GroundTruthTable.load(os.path.join(run_dir, "ground_truth.txt"))
    code = build_code(cfg.code_m, cfg.code_t)
    mdh = load_mdh(os.path.join(run_dir, "mdh.ckpt"), cfg)

    model = NndModel(code, cfg.nnd_iterations)
    model, curve = pretrain_awgn(model, cfg.nnd_train_config(stage_seed(cfg, "nnd_pre")))
    _log_event(run_dir, f"nnd_pretrain val_curve_first={curve[0]!r} val_curve_best={min(curve)!r}")
    save_nnd(os.path.join(run_dir, "nnd_pretrained.ckpt"), cfg, model, "nnd_pretrained")

    nnd_split = splits["nnd"]
    enroll = nnd_split.by_role("enroll")
    acts = _activations(mdh, enroll)
    inputs = {}
    for s in enroll.subject_ids:
        if int(s) in table.labels:
            inputs[int(s)] = llr_from_activations(acts[enroll.subject == s], cfg.llr_scale)
    if not inputs:
        raise PipelineError("no labeled subjects available for fine-tuning")
    sweep, best_scale = sweep_llr_scale(
        model, {s: acts[enroll.subject == s] for s in inputs}, table,
        log_path=os.path.join(run_dir, "experiment.log"),
    )
    model = finetune_biometric(
        model, inputs, table, cfg.nnd_train_config(stage_seed(cfg, "nnd_ft"),
                                                   steps=cfg.nnd_finetune_steps),
    )
    save_nnd(os.path.join(run_dir, "nnd_finetuned.ckpt"), cfg, model, "nnd_finetuned")
    _mark(run_dir, cfg, "nnd")
    return {"pretrain_curve": curve, "scale_sweep": sweep, "best_scale": best_scale}


def _composed_loss(mdh, nndm, face, iris, targets, scale):
    acts, _ = mdh.forward(face, iris)
    llr = ad.clip(ad.mul(Tensor(scale), acts), -30.0, 30.0)
    probs = nndm.forward(llr)
    return ad.binary_cross_entropy(probs, Tensor(targets))


def stage_joint_optimize(cfg: ExperimentConfig, run_dir):
    if cfg.joint_freeze_mdh and cfg.joint_freeze_nnd:
        raise PipelineError("joint optimisation with every component frozen is vacuous")
    _require(run_dir, cfg, "mdh", "nnd")
    splits = _load_splits(cfg, run_dir)
    table = GroundTruthTable.load(os.path.join(run_dir, "ground_truth.txt"))
    code = build_code(cfg.code_m, cfg.code_t)
    mdh = load_mdh(os.path.join(run_dir, "mdh.ckpt"), cfg)
    mdh.discard_head()
    nndm = load_nnd(os.path.join(run_dir, "nnd_finetuned.ckpt"), cfg, code)

    nnd_split = splits["nnd"]
    labeled = np.isin(nnd_split.subject, sorted(table.labels))
    train_mask = labeled & (nnd_split.role == "enroll")
    val_mask = labeled & (nnd_split.role == "probe")
    if not train_mask.any():
        raise PipelineError("joint optimisation has no labeled training samples")
    targets_of = lambda mask: np.stack(
        [table.labels[int(s)] for s in nnd_split.subject[mask]]
    ).astype(np.float64)
    tr_face, tr_iris, tr_y = nnd_split.face[train_mask], nnd_split.iris[train_mask], targets_of(train_mask)
    va_face, va_iris, va_y = nnd_split.face[val_mask], nnd_split.iris[val_mask], targets_of(val_mask)
    if va_face.shape[0] == 0:
        va_face, va_iris, va_y = tr_face, tr_iris, tr_y

    params = {}
    if not cfg.joint_freeze_mdh:
        params.update({f"mdh/{k}": v for k, v in mdh.parameters().items()})
    if not cfg.joint_freeze_nnd:
        params.update({f"nnd/{k}": v for k, v in nndm.parameters().items()})
    opt = ad.Adam(params, step_size=cfg.joint_step_size)
    rng = np.random.default_rng(stage_seed(cfg, "joint"))

    def val_loss():
        with ad.no_grad():
            return float(_composed_loss(mdh, nndm, va_face, va_iris, va_y, cfg.llr_scale).data)

    best = {name: t.data.copy() for name, t in params.items()}
    best_val = val_loss()
    initial_val = best_val
    for step in range(cfg.joint_steps):
        idx = rng.integers(0, tr_face.shape[0], size=min(cfg.joint_batch_size, tr_face.shape[0]))
        loss = _composed_loss(mdh, nndm, tr_face[idx], tr_iris[idx], tr_y[idx], cfg.llr_scale)
        ad.GradientTape(loss).backward()
        if step == 0 and not cfg.joint_freeze_mdh:
            enc_norm = float(np.sqrt(sum(
                float((t.grad ** 2).sum()) for n, t in params.items()
                if n.startswith("mdh/") and ("face_enc" in n or "iris_enc" in n)
            )))
            _log_event(run_dir, f"joint encoder_grad_norm_step1={enc_norm!r}")
        opt.step()
        if (step + 1) % 10 == 0 or step == cfg.joint_steps - 1:
            val = val_loss()
            if val < best_val:
                best_val = val
                best = {name: t.data.copy() for name, t in params.items()}
    for name, tensor in params.items():
        tensor.data = best[name]
    _log_event(run_dir, f"joint val_loss_initial={initial_val!r} val_loss_best={best_val!r}")

    combined = {f"mdh/{k}": v for k, v in mdh.parameters().items()}
    combined.update({f"nnd/{k}": v for k, v in nndm.parameters().items()})
    meta = _mdh_meta(cfg, mdh)
    meta.update({"kind": "mdhnd", "iterations": nndm.iterations, "llr_scale": cfg.llr_scale})
    save_params(os.path.join(run_dir, "mdhnd.ckpt"), combined, meta)
    _mark(run_dir, cfg, "joint")
    return {"val_loss_initial": initial_val, "val_loss_best": best_val}


def load_mdhnd(run_dir, cfg: ExperimentConfig, code):
    params, meta = load_params(os.path.join(run_dir, "mdhnd.ckpt"))
    _check_compat(meta, cfg)
    mdh = MdhModel(
        meta["fusion_mode"], meta["face_dim"], meta["iris_dim"], meta["num_classes"],
        meta["code_bits"], meta["feature_dim"], meta["fusion_dim"],
        tuple(meta["encoder_hidden"]),
    )
    mdh.hashing.beta = meta["beta"]
    mdh.discard_head()
    for name, tensor in mdh.parameters().items():
        tensor.data = params[f"mdh/{name}"].copy()
    nndm = NndModel(code, meta["iterations"])
    for name, tensor in nndm.parameters().items():
        tensor.data = params[f"nnd/{name}"].copy()
    return mdh, nndm


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def variant_codes(cfg: ExperimentConfig, run_dir, variant, split):
    """Binary codes for every sample of a split under one system variant."""
    if variant not in VARIANTS:
        raise PipelineError(f"unknown variant '{variant}'; expected one of {VARIANTS}")
    _require(run_dir, cfg, *_VARIANT_NEEDS[variant])
    code = build_code(cfg.code_m, cfg.code_t)
    if variant == "mdhnd":
        mdh, nndm = load_mdhnd(run_dir, cfg, code)
    else:
        mdh = load_mdh(os.path.join(run_dir, "mdh.ckpt"), cfg)
        nndm = None
    acts = _activations(mdh, split)
    if variant == "mdh":
        return hard_limit(acts)
    if variant == "ext":
        codes = hard_limit(acts)
        out = codes.copy()
        for i in range(codes.shape[0]):
            res = decode_hard(code, codes[i])
            if res.success:
                out[i] = res.codeword
        return out  # failures keep the raw intermediate code
    if variant == "nnd":
        nndm = load_nnd(os.path.join(run_dir, "nnd_pretrained.ckpt"), cfg, code)
    llrs = llr_from_activations(acts, cfg.llr_scale)
    out = np.empty((llrs.shape[0], code.n), dtype=np.uint8)
    for i in range(0, llrs.shape[0], 512):
        out[i : i + 512] = nndm.decode(llrs[i : i + 512])
    return out


def _scored_bits(cfg, code, codes):
    if cfg.score_on == "message":
        return codes[:, : code.k], code.k
    return codes, code.n


def enrollment_templates(codes, subjects, roles):
    """Bitwise-majority template per subject over its enroll-role codes."""
    templates, ids = [], []
    for s in np.unique(subjects):
        rows = codes[(subjects == s) & (roles == "enroll")]
        if rows.shape[0] == 0:
            rows = codes[subjects == s]
        ones = rows.sum(axis=0)
        templates.append((2 * ones >= rows.shape[0]).astype(np.uint8))
        ids.append(int(s))
    return np.stack(templates), np.array(ids)


def stage_evaluate(cfg: ExperimentConfig, run_dir, mode, variant):
    """Authentication or identification metrics for one system variant."""
    if mode not in ("auth", "ident"):
        raise PipelineError(f"unknown evaluation mode '{mode}' (expected 'auth' or 'ident')")
    splits = _load_splits(cfg, run_dir)
    code = build_code(cfg.code_m, cfg.code_t)
    metrics = {
        "variant": variant,
        "mode": mode,
        "fingerprint": cfg.fingerprint(),
        "code": cfg.code_name(),
        "fusion_mode": cfg.fusion_mode,
    }
    if mode == "auth":
        split = splits["test"]
        codes = variant_codes(cfg, run_dir, variant, split)
        bits, length = _scored_bits(cfg, code, codes)
        by_subject = {int(s): bits[split.subject == s] for s in split.subject_ids}
        scores = score_protocol(by_subject, cfg.test_subjects, cfg.samples_per_subject)
        roc, eer = roc_and_eer(scores, length)
        metrics.update({
            "genuine_count": int(scores.genuine.size),
            "impostor_count": int(scores.impostor.size),
            "eer": float(eer),
        })
        for target in cfg.far_targets:
            metrics[f"gar_at_far_{target}"] = gar_at_far(roc, target)
        write_roc_csv(os.path.join(run_dir, f"roc_auth_{variant}.csv"), roc)
        write_metrics(os.path.join(run_dir, f"metrics_auth_{variant}.txt"), metrics)
        return metrics

    split = splits["nnd"]
    codes = variant_codes(cfg, run_dir, variant, split)
    bits, _ = _scored_bits(cfg, code, codes)
    templates, ids = enrollment_templates(bits, split.subject, split.role)
    probe_mask = split.role == "probe"
    accuracy = identification_accuracy(
        bits[probe_mask], split.subject[probe_mask], templates, ids
    )
    metrics["identification_accuracy"] = float(accuracy)
    write_metrics(os.path.join(run_dir, f"metrics_ident_{variant}.txt"), metrics)
    return metrics


def stage_bench(cfg: ExperimentConfig, run_dir, repetitions=200):
    """Wall-clock per-authentication latency of the jointly optimised system."""
    _require(run_dir, cfg, *_VARIANT_NEEDS["mdhnd"])
    splits = _load_splits(cfg, run_dir)
    code = build_code(cfg.code_m, cfg.code_t)
    mdh, nndm = load_mdhnd(run_dir, cfg, code)
    split = splits["test"]
    codes = variant_codes(cfg, run_dir, "mdhnd", split)
    templates, ids = enrollment_templates(codes, split.subject, split.role)
    template_of = dict(zip(ids.tolist(), templates))
    probe_mask = np.nonzero(split.role == "probe")[0]
    queries = [
        (split.face[i], split.iris[i], template_of[int(split.subject[i])])
        for i in probe_mask[: min(len(probe_mask), 64)]
    ]

    def authenticate(query):
        face, iris, template = query
        with ad.no_grad():
            acts, _ = mdh.forward(face[None, :], iris[None, :])
        llr = llr_from_activations(acts.data, cfg.llr_scale)
        bits = nndm.decode(llr)[0]
        return hamming(bits, template)

    stats = bench_authentication(authenticate, queries, repetitions)
    report = {"code": cfg.code_name(), "variant": "mdhnd", **stats.as_dict()}
    write_metrics(os.path.join(run_dir, "bench_mdhnd.txt"), report)
    return stats


# ---------------------------------------------------------------------------
# convenience driver
# ---------------------------------------------------------------------------

def run_all(cfg: ExperimentConfig, run_dir, overwrite=False):
    """Run every applicable stage and evaluation for one config."""
    t0 = time.time()
    stage_generate_data(cfg, run_dir, overwrite=overwrite)
    stage_train_mdh(cfg, run_dir)
    unimodal = cfg.fusion_mode in ("face", "iris")
    variants = ["mdh"]
    if not unimodal:
        stage_ground_truth(cfg, run_dir)
        stage_train_nnd(cfg, run_dir)
        stage_joint_optimize(cfg, run_dir)
        variants = list(VARIANTS)
    results = {}
    for variant in variants:
        results[("auth", variant)] = stage_evaluate(cfg, run_dir, "auth", variant)
        results[("ident", variant)] = stage_evaluate(cfg, run_dir, "ident", variant)
    _log_event(run_dir, f"run_all completed in {time.time() - t0:.1f}s")
    return results
