"""On-disk store of per-step predicted and updated state covariances.

Layout::

    <dir>/manifest.json        {"n_steps", "dim", "dtype", "files": {name: sha256}}
    <dir>/pred_0000.dsmx       W_{1|0}
    <dir>/upd_0000.dsmx        W_{1|1}
    ...
    <dir>/upd_{N-1:04d}.dsmx   W_{N|N}

Index ``i`` holds time step ``k = i + 1``.
"""
import json
from pathlib import Path

from ..errors import CorruptError
from ..matcore.io import dtype_code, read_matrix, write_matrix

MANIFEST = "manifest.json"


class CheckpointStore:
    """Covariance checkpoints written by the filter and read by the smoother.

    Entries are checksummed as they are written; :meth:`finalize` records
    the step count and writes the manifest. A store is only considered
    complete once its manifest lists ``n_steps`` pred and upd files.
    """

    def __init__(self, directory, dtype="binary32"):
        self.directory = Path(directory)
        self.dtype = dtype_code(dtype)
        self._files = {}
        self._dim = None

    @staticmethod
    def name(kind, index):
        return f"{kind}_{index:04d}.dsmx"

    def reset(self):
        """Remove any previous checkpoints and start empty."""
        self.directory.mkdir(parents=True, exist_ok=True)
        for p in self.directory.glob("*.dsmx"):
            p.unlink()
        (self.directory / MANIFEST).unlink(missing_ok=True)
        self._files = {}
        self._dim = None

    def put(self, index, pred, upd):
        self._dim = pred.shape[0]
        for kind, mat in (("pred", pred), ("upd", upd)):
            fname = self.name(kind, index)
            self._files[fname] = write_matrix(self.directory / fname, mat, self.dtype)

    def finalize(self, n_steps):
        manifest = {"n_steps": int(n_steps), "dim": self._dim, "dtype": self.dtype,
                    "files": dict(sorted(self._files.items()))}
        (self.directory / MANIFEST).write_text(json.dumps(manifest, indent=1))
        return manifest

    def manifest(self):
        path = self.directory / MANIFEST
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise CorruptError("checkpoint manifest missing", path=path) from None
        except json.JSONDecodeError as exc:
            raise CorruptError(f"unreadable checkpoint manifest: {exc}", path=path) from None
        n = doc.get("n_steps")
        files = doc.get("files", {})
        for i in range(n or 0):
            for kind in ("pred", "upd"):
                if self.name(kind, i) not in files:
                    raise CorruptError(f"manifest lacks {self.name(kind, i)}", path=path)
        return doc

    def verify(self, n_steps=None, dim=None):
        """Check completeness and shape; returns the manifest."""
        doc = self.manifest()
        if n_steps is not None and doc["n_steps"] != n_steps:
            raise CorruptError(f"store holds {doc['n_steps']} steps, expected {n_steps}",
                               path=self.directory)
        if dim is not None and doc["dim"] != dim:
            raise CorruptError(f"store dimension {doc['dim']}, expected {dim}",
                               path=self.directory)
        return doc

    def get(self, kind, index, manifest=None):
        doc = manifest if manifest is not None else self.manifest()
        fname = self.name(kind, index)
        mat = read_matrix(self.directory / fname, sha256=doc["files"].get(fname))
        if mat.shape != (doc["dim"], doc["dim"]):
            raise CorruptError(f"checkpoint has shape {mat.shape}",
                               path=self.directory / fname)
        return mat

    def paths(self):
        return sorted(self.directory.glob("*.dsmx"))
