"""Data provisioning: synthetic two-domain corpus, WAV ingestion, splits.

The synthetic generator replaces licensed emotion corpora while keeping the
experimental structure intact: two domains (source/target) with a
controllable distribution shift, binary emotion labels, and the standard
split protocol (source 90/10 train/val; target 5/95 when labeled, 30/70
when label-free).  Positive-class clips are brighter, higher-pitched and
faster-modulated harmonic tones; negative-class clips are darker, lower and
slower.  The target domain adds a global pitch offset, a fixed low-pass
channel, and a noise floor on top.

Everything is a pure function of (spec, seed): regenerating any single clip
from its manifest row is deterministic, so `synth://` pseudo-paths can be
resolved without materializing audio.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .augment import Waveform
from .errors import ConfigError, DataError, FormatError
from .rng import derive_rng

SOURCE = "source"
TARGET = "target"
DOMAINS = (SOURCE, TARGET)
SPLITS = ("train", "val", "test")

_DOMAIN_KEY = {SOURCE: 0, TARGET: 1}


# ---------------------------------------------------------------------------
# WAV files


def load_wav(path: str, expected_rate: int | None = None) -> Waveform:
    """Read a mono 16-bit PCM or 32-bit float WAV into [-1, 1] float64."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.ndim} channels")
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{path}: sample_rate {rate} != configured {expected_rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported encoding {data.dtype}, need int16 or float32")
    return Waveform(samples, int(rate))


def save_wav(path: str, w: Waveform, encoding: str = "float32") -> None:
    """Write a mono WAV; float32 round-trips through load_wav bit-exactly."""
    if encoding == "float32":
        wavfile.write(path, w.sample_rate, w.samples.astype(np.float32))
    elif encoding == "pcm16":
        clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, w.sample_rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ConfigError(f"unknown WAV encoding {encoding!r}")


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRow:
    path: str
    emotion: int
    domain: str
    split: str


@dataclass
class Manifest:
    """Ordered sample table plus the header metadata every loader needs."""

    rows: list[ManifestRow]
    sample_rate: int = 16000
    num_classes: int = 2

    def select(self, domain: str | None = None, split: str | None = None) -> list[int]:
        """Row indices matching the given domain/split filters."""
        return [
            i
            for i, r in enumerate(self.rows)
            if (domain is None or r.domain == domain) and (split is None or r.split == split)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# sample_rate={self.sample_rate}\n")
        buf.write(f"# num_classes={self.num_classes}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "emotion", "domain", "split"])
        for r in self.rows:
            writer.writerow([r.path, r.emotion, r.domain, r.split])
        return buf.getvalue()

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path: str) -> "Manifest":
        meta = {"sample_rate": 16000, "num_classes": 2}
        body: list[str] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    if key.strip() in meta:
                        meta[key.strip()] = int(value)
                elif line.strip():
                    body.append(line)
        if not body:
            raise FormatError(f"{path}: empty manifest")
        reader = csv.reader(body)
        header = next(reader)
        if header != ["path", "emotion", "domain", "split"]:
            raise FormatError(f"{path}: bad header {header}, need path,emotion,domain,split")
        rows = []
        for rec in reader:
            if len(rec) != 4:
                raise FormatError(f"{path}: malformed row {rec}")
            p, emo, dom, spl = rec
            if dom not in DOMAINS:
                raise FormatError(f"{path}: unknown domain {dom!r}")
            if spl not in SPLITS:
                raise FormatError(f"{path}: unknown split {spl!r}")
            rows.append(ManifestRow(p, int(emo), dom, spl))
        return cls(rows, sample_rate=meta["sample_rate"], num_classes=meta["num_classes"])


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class ClassSpec:
    """Generator parameters for one emotion class."""

    f0_hz: tuple[float, float]
    mod_rate_hz: tuple[float, float]
    harmonic_tilt: float  # harmonic k gets amplitude k**(-tilt)
    mod_depth: float


@dataclass(frozen=True)
class DomainShift:
    """What the target domain does to every clip on top of the class model."""

    pitch_offset_hz: float = 60.0
    channel_alpha: float = 0.35  # one-pole low-pass coefficient, 0 disables
    noise_floor_snr_db: float = 18.0  # inf disables


@dataclass(frozen=True)
class SynthSpec:
    """Full recipe for the two-domain synthetic corpus."""

    num_per_domain: int = 200
    classes: tuple[ClassSpec, ClassSpec] = (
        ClassSpec(f0_hz=(95.0, 140.0), mod_rate_hz=(1.5, 3.0), harmonic_tilt=1.8, mod_depth=0.35),
        ClassSpec(f0_hz=(185.0, 245.0), mod_rate_hz=(5.0, 8.0), harmonic_tilt=0.6, mod_depth=0.85),
    )
    shift: DomainShift = DomainShift()
    duration_s: tuple[float, float] = (1.0, 1.0)
    sample_rate: int = 16000
    num_harmonics: int = 5
    seed: int = 1234

    def validate(self) -> None:
        if self.num_per_domain < 4:
            raise ConfigError("num_per_domain must be at least 4")
        if self.duration_s[0] <= 0 or self.duration_s[0] > self.duration_s[1]:
            raise ConfigError(f"bad duration range {self.duration_s}")
        if self.sample_rate <= 0 or self.num_harmonics < 1:
            raise ConfigError("sample_rate and num_harmonics must be positive")
        for c, spec in enumerate(self.classes):
            if spec.f0_hz[0] <= 0 or spec.f0_hz[0] > spec.f0_hz[1]:
                raise ConfigError(f"class {c}: bad f0 range {spec.f0_hz}")
            top = (spec.f0_hz[1] + abs(self.shift.pitch_offset_hz)) * self.num_harmonics
            if top >= self.sample_rate / 2:
                raise ConfigError(f"class {c}: harmonics exceed Nyquist ({top:.0f} Hz)")
            if spec.mod_rate_hz[0] <= 0 or spec.mod_rate_hz[0] > spec.mod_rate_hz[1]:
                raise ConfigError(f"class {c}: bad modulation range {spec.mod_rate_hz}")
            if not (0.0 <= spec.mod_depth <= 1.0):
                raise ConfigError(f"class {c}: mod_depth must be in [0, 1]")


def synth_path(emotion: int, index: int) -> str:
    return f"synth://{emotion}/{index}"


def parse_synth_path(path: str) -> tuple[int, int]:
    if not path.startswith("synth://"):
        raise FormatError(f"not a synth pseudo-path: {path}")
    try:
        emotion, index = path[len("synth://") :].split("/")
        return int(emotion), int(index)
    except ValueError as exc:
        raise FormatError(f"malformed synth pseudo-path: {path}") from exc


def synthesize_clip(spec: SynthSpec, domain: str, emotion: int, index: int) -> Waveform:
    """Render one clip; pure in (spec, domain, emotion, index)."""
    cls = spec.classes[emotion]
    rng = derive_rng(spec.seed, 0x5EED, _DOMAIN_KEY[domain], emotion, index)
    duration = rng.uniform(*spec.duration_s)
    n = max(1, int(round(duration * spec.sample_rate)))
    t = np.arange(n) / spec.sample_rate

    f0 = rng.uniform(*cls.f0_hz)
    if domain == TARGET:
        f0 += spec.shift.pitch_offset_hz
    mod_rate = rng.uniform(*cls.mod_rate_hz)
    mod_phase = rng.uniform(0.0, 2.0 * math.pi)

    sig = np.zeros(n)
    for k in range(1, spec.num_harmonics + 1):
        amp = k ** (-cls.harmonic_tilt)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        sig += amp * np.sin(2.0 * math.pi * k * f0 * t + phase)
    envelope = 1.0 - cls.mod_depth / 2.0 + (cls.mod_depth / 2.0) * np.sin(
        2.0 * math.pi * mod_rate * t + mod_phase
    )
    sig *= envelope

    if domain == TARGET:
        alpha = spec.shift.channel_alpha
        if alpha > 0.0:
            sig = lfilter(np.array([1.0 - alpha]), np.array([1.0, -alpha]), sig)
        snr = spec.shift.noise_floor_snr_db
        if math.isfinite(snr):
            noise = rng.standard_normal(n)
            power = float(np.mean(sig**2))
            noise *= math.sqrt(power / 10.0 ** (snr / 10.0) / float(np.mean(noise**2)))
            sig = sig + noise

    peak = np.max(np.abs(sig))
    level = rng.uniform(0.5, 0.9)
    if peak > 0:
        sig = sig / peak * level
    return Waveform(sig, spec.sample_rate)


def generate_synthetic(spec: SynthSpec) -> "Corpus":
    """Materialize the full two-domain corpus in memory, splits included."""
    spec.validate()
    rows = []
    for domain in DOMAINS:
        for index in range(spec.num_per_domain):
            emotion = index % len(spec.classes)
            rows.append(ManifestRow(synth_path(emotion, index), emotion, domain, "train"))
    manifest = Manifest(rows, sample_rate=spec.sample_rate, num_classes=len(spec.classes))
    return Corpus(manifest, synth_spec=spec)


# ---------------------------------------------------------------------------
# splits


DEFAULT_SOURCE_RATIOS = {"train": 0.9, "val": 0.1}
TARGET_LABELED_RATIOS = {"train": 0.05, "test": 0.95}
TARGET_UNLABELED_RATIOS = {"train": 0.30, "test": 0.70}


def split_manifest(
    manifest: Manifest, ratios_by_domain: dict[str, dict[str, float]], seed: int
) -> Manifest:
    """Assign splits, stratified by emotion class within each domain.

    Ratios must sum to 1 per domain; counts follow largest-remainder
    rounding so class proportions are preserved within one sample.
    """
    for domain, ratios in ratios_by_domain.items():
        if abs(sum(ratios.values()) - 1.0) > 1e-9:
            raise ConfigError(f"{domain}: split ratios {ratios} do not sum to 1")
        for name in ratios:
            if name not in SPLITS:
                raise ConfigError(f"{domain}: unknown split name {name!r}")
    new_rows: list[ManifestRow | None] = [None] * len(manifest.rows)
    for domain, ratios in ratios_by_domain.items():
        names = list(ratios.keys())
        classes = sorted({manifest.rows[i].emotion for i in manifest.select(domain=domain)})
        for emotion in classes:
            idx = [
                i
                for i in manifest.select(domain=domain)
                if manifest.rows[i].emotion == emotion
            ]
            rng = derive_rng(seed, 0x59117, _DOMAIN_KEY[domain], emotion)
            order = [idx[j] for j in rng.permutation(len(idx))]
            counts = _largest_remainder(len(order), [ratios[n] for n in names])
            start = 0
            for name, count in zip(names, counts):
                for i in order[start : start + count]:
                    new_rows[i] = replace(manifest.rows[i], split=name)
                start += count
    for i, row in enumerate(new_rows):
        if row is None:
            new_rows[i] = manifest.rows[i]
    return Manifest(list(new_rows), manifest.sample_rate, manifest.num_classes)


def _largest_remainder(total: int, fractions: list[float]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(math.floor(x)) for x in raw]
    remainder = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts


# ---------------------------------------------------------------------------
# corpus = manifest + a way to get waveforms


class Corpus:
    """A manifest plus a resolver from rows to waveforms.

    Synthetic rows (`synth://` paths) are rendered on demand and cached;
    file rows are loaded from disk relative to the manifest directory.
    """

    def __init__(
        self,
        manifest: Manifest,
        synth_spec: SynthSpec | None = None,
        root_dir: str = ".",
    ):
        self.manifest = manifest
        self.synth_spec = synth_spec
        self.root_dir = root_dir
        self._cache: dict[int, Waveform] = {}

    @classmethod
    def from_manifest(cls, path: str, synth_spec: SynthSpec | None = None) -> "Corpus":
        manifest = Manifest.load(path)
        return cls(manifest, synth_spec=synth_spec, root_dir=os.path.dirname(path) or ".")

    def waveform(self, row_index: int) -> Waveform:
        w = self._cache.get(row_index)
        if w is not None:
            return w
        row = self.manifest.rows[row_index]
        if row.path.startswith("synth://"):
            if self.synth_spec is None:
                raise DataError(f"row {row_index}: synth path {row.path} but no synth spec")
            emotion, index = parse_synth_path(row.path)
            w = synthesize_clip(self.synth_spec, row.domain, emotion, index)
        else:
            path = row.path if os.path.isabs(row.path) else os.path.join(self.root_dir, row.path)
            w = load_wav(path, expected_rate=self.manifest.sample_rate)
        self._cache[row_index] = w
        return w

    def split_rows(self, domain: str, split: str) -> list[int]:
        return self.manifest.select(domain=domain, split=split)


# ---------------------------------------------------------------------------
# batches


@dataclass(frozen=True)
class Batch:
    """One training batch; emotion labels may be withheld (label-free mode)."""

    domain: str
    origin_indices: tuple[int, ...]
    waveforms: tuple[Waveform, ...]
    labeled: bool
    _labels: tuple[int, ...] | None = field(default=None, repr=False)

    @property
    def labels(self) -> tuple[int, ...]:
        if not self.labeled or self._labels is None:
            raise DataError(f"emotion labels are not available for this {self.domain} batch")
        return self._labels

    def __len__(self) -> int:
        return len(self.origin_indices)


def batch_iter(
    corpus: Corpus,
    domain: str,
    split: str,
    batch_size: int,
    num_batches: int,
    seed: int,
    epoch_index: int,
    with_labels: bool,
):
    """Yield ``num_batches`` batches, reshuffled per (seed, epoch_index).

    If the split holds fewer samples than requested, it is cycled with a
    fresh deterministic permutation per cycle, so over a whole epoch every
    sample appears either floor or ceil of the average number of times.
    """
    rows = corpus.split_rows(domain, split)
    if not rows:
        raise DataError(f"empty split: domain={domain} split={split}")
    needed = batch_size * num_batches
    order: list[int] = []
    cycle = 0
    while len(order) < needed:
        rng = derive_rng(seed, 0xBA7C4, _DOMAIN_KEY[domain], epoch_index, cycle)
        order.extend(rows[j] for j in rng.permutation(len(rows)))
        cycle += 1
    order = order[:needed]
    for b in range(num_batches):
        chunk = order[b * batch_size : (b + 1) * batch_size]
        waveforms = tuple(corpus.waveform(i) for i in chunk)
        labels = tuple(corpus.manifest.rows[i].emotion for i in chunk) if with_labels else None
        yield Batch(
            domain=domain,
            origin_indices=tuple(chunk),
            waveforms=waveforms,
            labeled=with_labels,
            _labels=labels,
        )
