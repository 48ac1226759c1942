import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path

from version import __version__

logger = logging.getLogger("provenance")

SIDECAR = "metadata.json"


def file_digest(path: Path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Collects run events as JSON envelopes and writes them to `<out>/metadata.json`.

    Envelope shape: {"type": str, "runId": str, "ts": iso8601, "payload": any}

    This sidecar is the only artifact carrying wall-clock timestamps; every other
    output is a pure function of configuration, inputs and seed.
    """

    def __init__(self, out_dir: Path, run_id: str):
        self.out_dir = Path(out_dir)
        self.run_id = run_id
        self.events = []

    def send(self, msg_type: str, payload):
        self.events.append({
            "type": msg_type,
            "runId": self.run_id,
            "ts": datetime.now(timezone.utc).isoformat(),
            "payload": payload,
        })

    def start(self, config: dict, inputs=()):
        self.send("start", {
            "version": __version__,
            "config": config,
            "inputs": {str(p): file_digest(Path(p)) for p in inputs},
        })

    def stop(self, exit_code: int, outputs=()):
        self.send("finish", {"exitCode": exit_code, "outputs": sorted(str(p) for p in outputs)})
        return self.write()

    def write(self):
        path = self.out_dir / SIDECAR
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.events, indent=2, default=str) + "\n", encoding="utf-8")
        except OSError as exc:
            logger.error("Could not write %s: %s", path, exc)
            return None
        return path
