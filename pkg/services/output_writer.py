# Output Writer
# Writes CSV reports, binary posterior samples and the run manifest into one directory

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from core.errors import ConfigError, DataParseError
from core.gibbs_sampler import PosteriorSamples
from schemas.manifest import RunManifest
from schemas.model_config import ConstraintMode

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
MANIFEST_NAME = "manifest.json"
SAMPLES_DIR = "samples"
SAMPLE_ARRAYS = (
    "chain", "iteration", "beta", "gamma", "omega",
    "sigma2_obs", "sigma2_rnd", "sigma2_s", "sigma2_v", "m_star", "logistic",
)


def file_digest(path: Union[str, Path]) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """'.' decimals, LF line endings, fixed float format, no index."""
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FORMAT)
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        return RunManifest.model_validate_json(path.read_text())
    except ValueError as e:
        raise ConfigError(f"invalid manifest {path}: {e}")


def verify_manifest(out_dir: Union[str, Path]) -> Dict[str, bool]:
    """Recompute output digests; {relative path: matches}."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir)
    return {
        name: (out_dir / name).exists() and file_digest(out_dir / name) == digest
        for name, digest in manifest.output_digests.items()
    }


class OutputWriter:
    """
    Owns one output directory. Every file written through it is digested
    into the manifest, which is written last.
    """

    def __init__(self, out_dir: Union[str, Path], manifest: Optional[RunManifest] = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest or RunManifest(command="")

    def _record(self, path: Path) -> Path:
        relative = path.relative_to(self.out_dir).as_posix()
        self.manifest.output_digests[relative] = file_digest(path)
        logger.debug(f"Wrote {relative}")
        return path

    def record_input(self, path: Union[str, Path]) -> None:
        path = Path(path)
        self.manifest.input_digests[str(path)] = file_digest(path)

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return self._record(write_csv(frame, path))

    def write_samples(self, samples: PosteriorSamples) -> Path:
        """One .npy file per parameter block plus a small JSON index."""
        directory = self.out_dir / SAMPLES_DIR
        directory.mkdir(exist_ok=True)
        for name in SAMPLE_ARRAYS:
            values = getattr(samples, name)
            if values is None:
                continue
            self._record(_save_npy(directory / f"{name}.npy", np.ascontiguousarray(values)))
        index = {
            "variant": samples.variant.value,
            "biomarkers": list(samples.biomarkers),
            "biomarker_groups": list(samples.biomarker_groups),
            "group_names": list(samples.group_names),
            "covariate_names": list(samples.covariate_names),
        }
        index_path = directory / "index.json"
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        self._record(index_path)
        return directory

    def write_manifest(self) -> Path:
        path = self.out_dir / MANIFEST_NAME
        path.write_text(self.manifest.model_dump_json(indent=2) + "\n")
        logger.info(f"Wrote {len(self.manifest.output_digests)} outputs and manifest to {self.out_dir}")
        return path


def _save_npy(path: Path, values: np.ndarray) -> Path:
    with open(path, "wb") as handle:
        np.save(handle, values, allow_pickle=False)
    return path


def load_samples(out_dir: Union[str, Path]) -> PosteriorSamples:
    """Inverse of OutputWriter.write_samples (trace left empty)."""
    directory = Path(out_dir) / SAMPLES_DIR
    index_path = directory / "index.json"
    if not index_path.exists():
        raise DataParseError(f"no posterior samples in {out_dir}")
    index = json.loads(index_path.read_text())
    arrays = {}
    for name in SAMPLE_ARRAYS:
        path = directory / f"{name}.npy"
        arrays[name] = np.load(path, allow_pickle=False) if path.exists() else None
    return PosteriorSamples(
        variant=ConstraintMode(index["variant"]),
        biomarkers=index["biomarkers"],
        biomarker_groups=tuple(index["biomarker_groups"]),
        group_names=index["group_names"],
        covariate_names=index["covariate_names"],
        **arrays,
    )
