"""Deterministic synthetic labeled-log corpora with known ground truth.

Messages are built from word pools via templates, with optional random
injections, so the signal available to each model path (word statistics
vs token order) is controlled exactly. Three presets cover the shipped
experiment protocols.
"""

from __future__ import annotations

import hashlib
import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SynthError(ValueError):
    pass


_PLACEHOLDER_RE = re.compile(r"^\{([a-z0-9_]+)\}$")
_CONSONANTS = "bdfgjklmnprstvwz"
_VOWELS = "aeiou"


@dataclass
class Injection:
    """Random extra words: with probability `rate`, insert `min_count`
    to `max_count` draws from `pool` at random positions."""

    pool: str
    rate: float
    min_count: int = 1
    max_count: int = 1


@dataclass
class LabelSpec:
    name: str
    templates: list[str]
    injections: list[Injection] = field(default_factory=list)


@dataclass
class SynthSpec:
    name: str
    messages_per_label: int
    pools: dict[str, list[str]]
    labels: list[LabelSpec]
    # Pools drawn round-robin within each label instead of uniformly, so
    # every word lands in every label equally often and carries no label
    # signal in pooled counts.
    balanced: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.messages_per_label < 1:
            raise SynthError("messages_per_label must be >= 1")
        if not self.labels:
            raise SynthError("spec lists no labels")
        names = [spec.name for spec in self.labels]
        if len(set(names)) != len(names):
            raise SynthError(f"duplicate label names in {names}")
        for pool, words in self.pools.items():
            if not words:
                raise SynthError(f"pool {pool!r} is empty")
        for pool in self.balanced:
            if pool not in self.pools:
                raise SynthError(f"balanced pool {pool!r} is not defined")
        for spec in self.labels:
            if not spec.templates:
                raise SynthError(f"label {spec.name!r} has no templates")
            for template in spec.templates:
                for token in template.split():
                    match = _PLACEHOLDER_RE.match(token)
                    if match and match.group(1) != "num" \
                            and match.group(1) not in self.pools:
                        raise SynthError(
                            f"template for {spec.name!r} references unknown "
                            f"pool {match.group(1)!r}")
            for inj in spec.injections:
                if inj.pool not in self.pools:
                    raise SynthError(
                        f"injection for {spec.name!r} references unknown "
                        f"pool {inj.pool!r}")
                if not 0.0 <= inj.rate <= 1.0:
                    raise SynthError(f"injection rate {inj.rate} outside [0, 1]")
                if not 1 <= inj.min_count <= inj.max_count:
                    raise SynthError(
                        f"injection counts {inj.min_count}..{inj.max_count} invalid")


def word_bank(count: int, tag: str) -> list[str]:
    """`count` distinct pronounceable lowercase words, fixed by `tag`.

    Independent of the corpus seed so pool contents are part of the
    spec, not of the sampling run.
    """
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(zlib.crc32(tag.encode("utf-8")))))
    seen: set[str] = set()
    words: list[str] = []
    while len(words) < count:
        picks = rng.integers(0, len(_CONSONANTS) * len(_VOWELS), size=3)
        word = "".join(_CONSONANTS[p // len(_VOWELS)] + _VOWELS[p % len(_VOWELS)]
                       for p in picks)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _pool_cycle(pool: list[str], rng: np.random.Generator):
    while True:
        for i in rng.permutation(len(pool)):
            yield pool[int(i)]


def _render(template: str, pools: dict[str, list[str]],
            rng: np.random.Generator, cycles: dict[str, object]) -> list[str]:
    words = []
    for token in template.split():
        match = _PLACEHOLDER_RE.match(token)
        if match is None:
            words.append(token)
        elif match.group(1) == "num":
            words.append(str(rng.integers(0, 10000)))
        elif match.group(1) in cycles:
            words.append(next(cycles[match.group(1)]))
        else:
            pool = pools[match.group(1)]
            words.append(pool[rng.integers(0, len(pool))])
    return words


def generate_synthetic(spec: SynthSpec, seed: int,
                       out_path: str | Path) -> dict:
    """Write `<label>\\t-\\t<message>` lines plus a JSON manifest.

    Byte-identical for a given (spec, seed). Returns the manifest.
    """
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    rows: list[tuple[str, str]] = []
    for label in spec.labels:
        cycles = {name: _pool_cycle(spec.pools[name], rng)
                  for name in spec.balanced}
        for _ in range(spec.messages_per_label):
            template = label.templates[rng.integers(0, len(label.templates))]
            words = _render(template, spec.pools, rng, cycles)
            for inj in label.injections:
                if rng.random() >= inj.rate:
                    continue
                pool = spec.pools[inj.pool]
                extra = rng.integers(inj.min_count, inj.max_count + 1)
                for _ in range(extra):
                    word = pool[rng.integers(0, len(pool))]
                    words.insert(rng.integers(0, len(words) + 1), word)
            rows.append((label.name, " ".join(words)))
    order = rng.permutation(len(rows))
    lines = [f"{rows[i][0]}\t-\t{rows[i][1]}" for i in order]
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    out_path = Path(out_path)
    out_path.write_bytes(payload)
    manifest = {
        "spec": spec.name,
        "seed": seed,
        "labels": [label.name for label in spec.labels],
        "messages_per_label": spec.messages_per_label,
        "total_lines": len(lines),
        "pools": {name: len(words) for name, words in sorted(spec.pools.items())},
        "balanced": sorted(spec.balanced),
        "injections": {
            label.name: [
                {"pool": inj.pool, "rate": inj.rate,
                 "min_count": inj.min_count, "max_count": inj.max_count}
                for inj in label.injections
            ]
            for label in spec.labels if label.injections
        },
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest


# -- presets -------------------------------------------------------------------


def make_default_spec(messages_per_label: int = 500) -> SynthSpec:
    """Cleanly separable 4-label corpus: exclusive keywords per label.

    Both the statistics and the semantic path can solve it; used for the
    end-to-end regression and smoke runs.
    """
    bank = word_bank(24 + 4 * 6 + 800, "default-v1")
    shared = bank[:24]
    pools = {"shared": shared, "hapax": bank[48:848]}
    labels = []
    for i, name in enumerate(("stream_error", "conn_drop",
                              "dup_request", "mem_leak")):
        key = bank[24 + 6 * i:24 + 6 * (i + 1)]
        pools[f"key_{name}"] = key
        templates = [
            f"{{key_{name}}} {{shared}} task {{num}} {{key_{name}}} {{shared}}",
            f"{{shared}} {{key_{name}}} {{num}} {{key_{name}}} on {{shared}}",
            f"{{key_{name}}} {{key_{name}}} {{shared}} {{shared}} {{num}}",
            f"{{shared}} {{num}} {{key_{name}}} {{shared}} {{key_{name}}}",
        ]
        labels.append(LabelSpec(name, templates,
                                [Injection("hapax", rate=0.5)]))
    return SynthSpec("default", messages_per_label, pools, labels)


def make_stats_spec(messages_per_label: int = 500) -> SynthSpec:
    """One always-present indicator word per label, rare shared fillers.

    Label is fully determined by the indicator's statistics alone.
    """
    bank = word_bank(4 + 1200, "stats-v1")
    pools = {"filler": bank[4:]}
    labels = []
    for i, name in enumerate(("disk_fault", "net_fault",
                              "auth_fault", "app_fault")):
        pools[f"ind_{name}"] = [bank[i]]
        templates = [
            f"{{ind_{name}}} {{filler}} {{filler}} {{filler}} {{num}}",
            f"{{filler}} {{ind_{name}}} {{num}} {{filler}} {{filler}}",
            f"{{filler}} {{filler}} {{ind_{name}}} {{filler}} {{num}}",
        ]
        labels.append(LabelSpec(name, templates))
    return SynthSpec("stats", messages_per_label, pools, labels)


def make_joint_spec(messages_per_label: int = 500) -> SynthSpec:
    """Labels require BOTH token order and rare-word statistics.

    The label is (order factor) x (family factor): whether a head-class
    word precedes or follows a tail-class word, crossed with which rare
    word family the message draws from. Pooled statistics are blind to
    order (head/tail/mid words are drawn round-robin per label, so
    their counts are exactly label-balanced); the rare families are too
    thinly spread for the semantic path to memorize quickly, but their
    pooled counts separate the families cleanly. No frequent tokens
    appear anywhere, digit runs included, so the family signal is not
    crushed by the log1p pooling.
    """
    bank = word_bank(20 + 20 + 30 + 340 + 340 + 3000, "fam-340")
    pools = {
        "head": bank[:20],
        "tail": bank[20:40],
        "mid": bank[40:70],
        "fam0": bank[70:410],
        "fam1": bank[410:750],
        "noise": bank[750:],
    }
    labels = []
    for order in ("fwd", "rev"):
        for family in ("fam0", "fam1"):
            if order == "fwd":
                templates = [
                    f"{{head}} {{mid}} {{{family}}} {{{family}}} {{mid}} {{tail}}",
                    f"{{head}} {{{family}}} {{mid}} {{{family}}} {{tail}} {{mid}}",
                    f"{{mid}} {{head}} {{{family}}} {{mid}} {{{family}}} {{tail}}",
                ]
            else:
                templates = [
                    f"{{tail}} {{mid}} {{{family}}} {{{family}}} {{mid}} {{head}}",
                    f"{{tail}} {{{family}}} {{mid}} {{{family}}} {{head}} {{mid}}",
                    f"{{mid}} {{tail}} {{{family}}} {{mid}} {{{family}}} {{head}}",
                ]
            group = "grp0" if family == "fam0" else "grp1"
            labels.append(LabelSpec(
                f"{order}_{group}", templates,
                [Injection("noise", rate=0.5, min_count=1, max_count=1)]))
    return SynthSpec("joint", messages_per_label, pools, labels,
                     balanced=("head", "tail", "mid"))


PRESETS = {
    "default": make_default_spec,
    "stats": make_stats_spec,
    "joint": make_joint_spec,
}
