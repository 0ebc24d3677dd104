"""Run configuration: one YAML file drives every pipeline stage."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .errors import PsytextError


class ConfigError(PsytextError):
    pass


@dataclass(frozen=True)
class ProviderSettings:
    kind: str = "simulated"  # "simulated" | "http"
    base_url: str | None = None
    model_id: str = "simulated-rater"
    temperature: float = 0.0
    api_key_env: str = "PSYTEXT_API_KEY"
    concurrency: int = 4
    retry_max: int = 2
    backoff_base: float = 0.5
    sample_count: int = 1
    timeout: float = 60.0


@dataclass(frozen=True)
class AnalysisSettings:
    retention: str = "parallel"       # "parallel" | "kaiser"
    parallel_reps: int = 100
    extraction: str = "principal_axis"  # "principal_axis" | "ml"
    rotation: str = "oblimin"         # "oblimin" | "varimax" | "none"
    loading_cutoff: float = 0.40
    missing_policy: str = "listwise"  # "listwise" | "pairwise"


@dataclass(frozen=True)
class SimulationSettings:
    """Synthetic study generation knobs (used by the simulate stage)."""

    n_texts: int = 500
    loading: float = 0.8
    residual: float | None = None          # default 1 - loading^2
    loading_overrides: dict = field(default_factory=dict)
    factor_correlation: float = 0.3
    criterion_name: str = "theta_proxy"
    criterion_factor: str | None = None    # default: first construct
    criterion_r: float = 0.6
    criterion_reliability: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    instrument_path: str
    corpus_path: str
    output_dir: str
    cache_path: str | None = None
    criteria_path: str | None = None
    criteria_meta_path: str | None = None
    master_seed: int = 7
    holdout_fraction: float = 0.5
    provider: ProviderSettings = field(default_factory=ProviderSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    simulation: SimulationSettings | None = None
    base_dir: str = "."

    def resolve(self, path: str | None) -> str | None:
        if path is None:
            return None
        if os.path.isabs(path):
            return path
        return os.path.normpath(os.path.join(self.base_dir, path))

    @property
    def instrument(self) -> str:
        return self.resolve(self.instrument_path)

    @property
    def corpus(self) -> str:
        return self.resolve(self.corpus_path)

    @property
    def output(self) -> str:
        return self.resolve(self.output_dir)

    @property
    def cache(self) -> str | None:
        return self.resolve(self.cache_path)

    @property
    def criteria(self) -> str | None:
        return self.resolve(self.criteria_path)

    @property
    def criteria_meta(self) -> str | None:
        return self.resolve(self.criteria_meta_path)

    def echo(self) -> dict:
        """Config as written, for embedding in reports (no secrets)."""
        out = {
            "instrument": self.instrument_path,
            "corpus": self.corpus_path,
            "output_dir": self.output_dir,
            "cache": self.cache_path,
            "criteria": self.criteria_path,
            "criteria_meta": self.criteria_meta_path,
            "master_seed": self.master_seed,
            "holdout_fraction": self.holdout_fraction,
            "provider": {
                "kind": self.provider.kind,
                "base_url": self.provider.base_url,
                "model": self.provider.model_id,
                "temperature": self.provider.temperature,
                "api_key_env": self.provider.api_key_env,
                "concurrency": self.provider.concurrency,
                "retry_max": self.provider.retry_max,
                "sample_count": self.provider.sample_count,
            },
            "analysis": {
                "retention": self.analysis.retention,
                "parallel_reps": self.analysis.parallel_reps,
                "extraction": self.analysis.extraction,
                "rotation": self.analysis.rotation,
                "loading_cutoff": self.analysis.loading_cutoff,
                "missing_policy": self.analysis.missing_policy,
            },
        }
        if self.simulation is not None:
            out["simulation"] = {
                "n_texts": self.simulation.n_texts,
                "loading": self.simulation.loading,
                "residual": self.simulation.residual,
                "factor_correlation": self.simulation.factor_correlation,
                "criterion_name": self.simulation.criterion_name,
                "criterion_factor": self.simulation.criterion_factor,
                "criterion_r": self.simulation.criterion_r,
                "criterion_reliability": self.simulation.criterion_reliability,
            }
        return out


_KNOWN_TOP_KEYS = {
    "instrument", "corpus", "output_dir", "cache", "criteria", "criteria_meta",
    "master_seed", "holdout_fraction", "provider", "analysis", "simulation",
}


def load_config(path: str, seed_override: int | None = None) -> RunConfig:
    """Parse a YAML run configuration.

    Unknown top-level keys are rejected: silently ignoring a typo like
    ``hold_fraction`` would change results without any error.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(doc) - _KNOWN_TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    for key in ("instrument", "corpus", "output_dir"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")

    prov = doc.get("provider") or {}
    provider = ProviderSettings(
        kind=prov.get("kind", "simulated"),
        base_url=prov.get("base_url"),
        model_id=prov.get("model", "simulated-rater"),
        temperature=float(prov.get("temperature", 0.0)),
        api_key_env=prov.get("api_key_env", "PSYTEXT_API_KEY"),
        concurrency=int(prov.get("concurrency", 4)),
        retry_max=int(prov.get("retry_max", 2)),
        backoff_base=float(prov.get("backoff_base", 0.5)),
        sample_count=int(prov.get("sample_count", 1)),
        timeout=float(prov.get("timeout", 60.0)),
    )
    if provider.kind not in ("simulated", "http"):
        raise ConfigError(f"{path}: provider.kind must be 'simulated' or 'http'")
    if provider.kind == "http" and not provider.base_url:
        raise ConfigError(f"{path}: provider.kind 'http' requires provider.base_url")

    ana = doc.get("analysis") or {}
    analysis = AnalysisSettings(
        retention=ana.get("retention", "parallel"),
        parallel_reps=int(ana.get("parallel_reps", 100)),
        extraction=ana.get("extraction", "principal_axis"),
        rotation=ana.get("rotation", "oblimin"),
        loading_cutoff=float(ana.get("loading_cutoff", 0.40)),
        missing_policy=ana.get("missing_policy", "listwise"),
    )

    simulation = None
    if "simulation" in doc and doc["simulation"] is not None:
        sim = doc["simulation"]
        simulation = SimulationSettings(
            n_texts=int(sim.get("n_texts", 500)),
            loading=float(sim.get("loading", 0.8)),
            residual=(None if sim.get("residual") is None else float(sim["residual"])),
            loading_overrides={
                str(k): float(v) for k, v in (sim.get("loading_overrides") or {}).items()
            },
            factor_correlation=float(sim.get("factor_correlation", 0.3)),
            criterion_name=sim.get("criterion_name", "theta_proxy"),
            criterion_factor=sim.get("criterion_factor"),
            criterion_r=float(sim.get("criterion_r", 0.6)),
            criterion_reliability=float(sim.get("criterion_reliability", 1.0)),
        )

    master_seed = int(doc.get("master_seed", 7))
    if seed_override is not None:
        master_seed = int(seed_override)

    return RunConfig(
        instrument_path=str(doc["instrument"]),
        corpus_path=str(doc["corpus"]),
        output_dir=str(doc["output_dir"]),
        cache_path=doc.get("cache"),
        criteria_path=doc.get("criteria"),
        criteria_meta_path=doc.get("criteria_meta"),
        master_seed=master_seed,
        holdout_fraction=float(doc.get("holdout_fraction", 0.5)),
        provider=provider,
        analysis=analysis,
        simulation=simulation,
        base_dir=os.path.dirname(os.path.abspath(path)),
    )
