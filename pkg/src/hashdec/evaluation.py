"""Authentication and identification metrics over binary codes.

Scores are integer Hamming distances; acceptance means distance <= threshold,
so FAR and GAR are non-decreasing step functions over the integer threshold
sweep and the EER comes from linear interpolation at the FAR/FRR crossing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def hamming(a, b):
    """Number of differing positions between two equal-length bit vectors."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(_POPCOUNT[np.packbits(a ^ b)].sum())


def pack_codes(codes):
    return np.packbits(np.asarray(codes, dtype=np.uint8), axis=1)


def pairwise_hamming(codes_a, codes_b, chunk=256):
    """Distance matrix between two stacks of equal-length codes."""
    pa, pb = pack_codes(codes_a), pack_codes(codes_b)
    out = np.empty((pa.shape[0], pb.shape[0]), dtype=np.int64)
    for i in range(0, pa.shape[0], chunk):
        x = pa[i : i + chunk, None, :] ^ pb[None, :, :]
        out[i : i + chunk] = _POPCOUNT[x].sum(axis=2)
    return out


@dataclass
class ScoreSet:
    """Genuine and impostor Hamming scores for an N-subject, t-sample protocol."""

    genuine: np.ndarray
    impostor: np.ndarray
    n_subjects: int
    samples_per_subject: int

    def __post_init__(self):
        n, t = self.n_subjects, self.samples_per_subject
        if self.genuine.size != n * t * (t - 1) // 2:
            raise ValueError(
                f"genuine count {self.genuine.size} != Nt(t-1)/2 = {n * t * (t - 1) // 2}"
            )
        if self.impostor.size != n * (n - 1) * t * t // 2:
            raise ValueError(
                f"impostor count {self.impostor.size} != N(N-1)t^2/2 = {n * (n - 1) * t * t // 2}"
            )


def score_protocol(codes_by_subject, n_subjects, samples_per_subject):
    """All intra-subject and inter-subject unordered pair distances.

    ``codes_by_subject`` maps subject -> (t, n) bit array; every subject must
    contribute exactly ``samples_per_subject`` codes.
    """
    subjects = sorted(codes_by_subject)
    if len(subjects) != n_subjects:
        raise ValueError(f"expected {n_subjects} subjects, got {len(subjects)}")
    stacks, owners = [], []
    for s in subjects:
        codes = np.asarray(codes_by_subject[s], dtype=np.uint8)
        if codes.ndim != 2 or codes.shape[0] != samples_per_subject:
            raise ValueError(
                f"subject {s} has {np.atleast_2d(codes).shape[0]} codes, "
                f"expected {samples_per_subject}"
            )
        stacks.append(codes)
        owners.append(np.full(codes.shape[0], s))
    codes = np.concatenate(stacks)
    owners = np.concatenate(owners)
    dist = pairwise_hamming(codes, codes)
    iu = np.triu_indices(codes.shape[0], k=1)
    same = owners[iu[0]] == owners[iu[1]]
    scores = dist[iu]
    return ScoreSet(scores[same], scores[~same], n_subjects, samples_per_subject)


@dataclass
class RocCurve:
    """(threshold, FAR, GAR) over every integer threshold from -1 to n."""

    thresholds: np.ndarray
    far: np.ndarray
    gar: np.ndarray


def roc_and_eer(scores: ScoreSet, n):
    """Threshold sweep plus the interpolated equal error rate.

    FAR(tau) is the fraction of impostor scores <= tau, GAR likewise for
    genuine scores, FRR = 1 - GAR. The EER interpolates linearly between the
    two adjacent integer thresholds where FAR - FRR changes sign.
    """
    if scores.genuine.size == 0 or scores.impostor.size == 0:
        raise ValueError("roc_and_eer requires nonempty genuine and impostor score lists")
    thresholds = np.arange(-1, n + 1)
    gen = np.sort(scores.genuine)
    imp = np.sort(scores.impostor)
    gar = np.searchsorted(gen, thresholds, side="right") / gen.size
    far = np.searchsorted(imp, thresholds, side="right") / imp.size
    frr = 1.0 - gar
    f = far - frr
    idx = int(np.argmax(f >= 0.0))  # f(-1) = -1, f(n) = +1: a crossing always exists
    lam = -f[idx - 1] / (f[idx] - f[idx - 1])
    eer = far[idx - 1] + lam * (far[idx] - far[idx - 1])
    return RocCurve(thresholds, far, gar), float(eer)


def gar_at_far(roc: RocCurve, far_target):
    """GAR at the largest threshold whose FAR does not exceed the target."""
    if not 0.0 < far_target < 1.0:
        raise ValueError(f"far_target must lie in (0, 1), got {far_target}")
    idx = int(np.searchsorted(roc.far, far_target, side="right")) - 1
    return float(roc.gar[max(idx, 0)])


def identification_accuracy(probe_codes, probe_subjects, enrolled_codes, enrolled_subjects):
    """Closed-set identification: nearest enrolled code wins, ties to lowest id."""
    probe_subjects = np.asarray(probe_subjects)
    enrolled_subjects = np.asarray(enrolled_subjects)
    uniq, counts = np.unique(enrolled_subjects, return_counts=True)
    if np.any(counts > 1):
        raise ValueError(f"duplicate enrolled subject ids: {uniq[counts > 1].tolist()}")
    missing = np.setdiff1d(probe_subjects, enrolled_subjects)
    if missing.size:
        raise ValueError(f"probe subjects not enrolled: {missing[:5].tolist()}")
    order = np.argsort(enrolled_subjects)
    enrolled_codes = np.asarray(enrolled_codes, dtype=np.uint8)[order]
    enrolled_subjects = enrolled_subjects[order]
    dist = pairwise_hamming(probe_codes, enrolled_codes)
    predicted = enrolled_subjects[np.argmin(dist, axis=1)]  # argmin: first = lowest id
    return float(np.mean(predicted == probe_subjects))


@dataclass
class LatencyStats:
    mean_ms: float
    median_ms: float
    p95_ms: float
    repetitions: int

    def as_dict(self):
        return {
            "latency_mean_ms": self.mean_ms,
            "latency_median_ms": self.median_ms,
            "latency_p95_ms": self.p95_ms,
            "latency_repetitions": self.repetitions,
        }


def bench_authentication(authenticate, queries, repetitions):
    """Wall-clock statistics for single end-to-end authentications.

    ``authenticate`` is a callable taking one element of ``queries``;
    repetitions cycle through the query list.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    if not queries:
        raise ValueError("bench_authentication needs at least one query")
    times = np.empty(repetitions)
    for i in range(repetitions):
        q = queries[i % len(queries)]
        t0 = time.perf_counter()
        authenticate(q)
        times[i] = (time.perf_counter() - t0) * 1e3
    return LatencyStats(
        float(times.mean()),
        float(np.median(times)),
        float(np.percentile(times, 95)),
        repetitions,
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_metrics(path, mapping):
    """Key/value metrics document; floats use shortest round-trip repr."""
    with open(path, "w") as fh:
        fh.write("# hashdec metrics v1\n")
        for key in sorted(mapping):
            value = mapping[key]
            if isinstance(value, float):
                fh.write(f"{key} {float(value)!r}\n")
            else:
                fh.write(f"{key} {value}\n")


def read_metrics(path):
    out = {}
    with open(path) as fh:
        for ln in fh:
            if ln.startswith("#") or not ln.strip():
                continue
            key, value = ln.rstrip("\n").split(" ", 1)
            try:
                out[key] = int(value)
            except ValueError:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


def write_roc_csv(path, roc: RocCurve):
    with open(path, "w") as fh:
        fh.write("threshold,far,gar\n")
        for t, fa, ga in zip(roc.thresholds, roc.far, roc.gar):
            fh.write(f"{int(t)},{float(fa)!r},{float(ga)!r}\n")
