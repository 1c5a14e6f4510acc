"""TCP location server: ingests observation tuples, serves fixes.

Newline-delimited text protocol over TCP, one message per line:

  OBS <kind> <receiver> src <id> seq <n> ts <seconds>   (no reply)
  QUERY target <id>            -> FIX ... | NOFIX target <id>
  anything malformed           -> ERR msg <reason>, connection stays open

A window is considered complete once a later target timestamp has been
seen (no wall clocks anywhere), and the answer to QUERY is recomputed
from the deduplicated store, so ingestion order never changes it.
"""

import socketserver
import threading
from collections.abc import Iterable

from .formats import ParseError, fix_line, fix_record, parse_observation_line
from .model import (
    BeaconObservation,
    LocationFix,
    ObservationWindow,
    SolverParams,
    TestbedConfig,
    window_observations,
)
from .trilateration import locate

DEFAULT_RETENTION_SECONDS = 300.0
PORT_ENV_VAR = "BEACONLOC_PORT"


class WindowStore:
    """Deduplicated observation store with per-target window assembly.

    Retention prunes each target's history older than ``retention``
    seconds behind its newest timestamp, plus anchor-side records whose
    beacons can no longer be referenced by any retained target beacon.
    Anchor records for sources no target has reported yet are kept.
    """

    def __init__(self, window_seconds: float = 18.0,
                 retention: float = DEFAULT_RETENTION_SECONDS):
        if window_seconds <= 0 or retention <= 0:
            raise ValueError("window length and retention must be positive")
        self.window_seconds = window_seconds
        self.retention = retention
        self._target_obs: dict[str, dict[tuple[int, int], BeaconObservation]] = {}
        self._anchor_obs: dict[tuple[int, int, int], BeaconObservation] = {}

    def add(self, obs: BeaconObservation) -> bool:
        """Store one observation; returns False for duplicates."""
        if obs.receiver_kind == "target":
            per_target = self._target_obs.setdefault(str(obs.receiver_id), {})
            key = (obs.source_id, obs.seqno)
            if key in per_target:
                return False
            per_target[key] = obs
            self._prune(str(obs.receiver_id))
            return True
        key = (obs.receiver_id, obs.source_id, obs.seqno)
        if key in self._anchor_obs:
            return False
        self._anchor_obs[key] = obs
        return True

    def _prune(self, target_id: str) -> None:
        per_target = self._target_obs[target_id]
        horizon = max(o.timestamp for o in per_target.values()) - self.retention
        stale = [k for k, o in per_target.items() if o.timestamp < horizon]
        for k in stale:
            del per_target[k]
        if not stale:
            return
        # oldest seqno still referenced per source, across all targets
        floor: dict[int, int] = {}
        for obs_map in self._target_obs.values():
            for src, seqno in obs_map:
                floor[src] = min(floor.get(src, seqno), seqno)
        dead = [
            k for k in self._anchor_obs
            if k[1] in floor and k[2] < floor[k[1]]
        ]
        for k in dead:
            del self._anchor_obs[k]

    def target_ids(self) -> list[str]:
        return sorted(self._target_obs)

    def observations_for(self, target_id: str) -> list[BeaconObservation]:
        per_target = self._target_obs.get(str(target_id), {})
        return list(per_target.values()) + list(self._anchor_obs.values())

    def completed_windows(self, target_id: str) -> list[ObservationWindow]:
        """Windows whose end has passed per the target's newest timestamp."""
        return completed_windows(self.observations_for(target_id), self.window_seconds)

    def latest_fix(
        self, target_id: str, config: TestbedConfig, params: SolverParams
    ) -> LocationFix | None:
        """Fix of the most recent completed window that yields one."""
        return latest_completed_fix(
            self.observations_for(target_id), self.window_seconds, config, params
        )


def completed_windows(
    observations: Iterable[BeaconObservation], window_seconds: float
) -> list[ObservationWindow]:
    """Windows of one target's stream whose end time has already passed,
    judged by the newest target timestamp seen (no wall clock involved)."""
    observations = list(observations)
    target_ts = [o.timestamp for o in observations if o.receiver_kind == "target"]
    if not target_ts:
        return []
    latest = max(target_ts)
    windows = window_observations(observations, window_seconds)
    return [w for w in windows if w.start + w.length <= latest]


def latest_completed_fix(
    observations: Iterable[BeaconObservation],
    window_seconds: float,
    config: TestbedConfig,
    params: SolverParams,
) -> LocationFix | None:
    """Fix of the most recent completed window that yields one."""
    for window in reversed(completed_windows(observations, window_seconds)):
        fix = locate(window, config, params)
        if fix is not None:
            return fix
    return None


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: LocationServer = self.server  # type: ignore[assignment]
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            reply = server.handle_line(line)
            if reply is not None:
                self.wfile.write((reply + "\n").encode())
                self.wfile.flush()


class LocationServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server around a locked WindowStore.

    Bind with port 0 to let the OS pick; the bound port is ``.port``.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        config: TestbedConfig,
        params: SolverParams,
        host: str = "",
        port: int = 0,
        window_seconds: float = 18.0,
        retention: float = DEFAULT_RETENTION_SECONDS,
    ):
        self.config = config
        self.params = params
        self.store = WindowStore(window_seconds, retention)
        self._lock = threading.Lock()
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def handle_line(self, line: str) -> str | None:
        """Process one protocol line; returns the reply or None (OBS)."""
        tokens = line.split()
        try:
            if tokens[0] == "OBS":
                obs = parse_observation_line(line)
                with self._lock:
                    self.store.add(obs)
                return None
            if tokens[0] == "QUERY":
                if len(tokens) != 3 or tokens[1] != "target":
                    return "ERR msg expected 'QUERY target <id>'"
                target_id = tokens[2]
                with self._lock:
                    snapshot = self.store.observations_for(target_id)
                # solve outside the lock so ingestion keeps flowing
                fix = latest_completed_fix(
                    snapshot, self.store.window_seconds, self.config, self.params
                )
                if fix is None:
                    return f"NOFIX target {target_id}"
                return fix_line(fix_record(target_id, fix))
            return f"ERR msg unknown message kind {tokens[0]!r}"
        except ParseError as exc:
            return f"ERR msg {exc}"
        except (IndexError, ValueError) as exc:
            return f"ERR msg malformed message: {exc}"

    def ingest(self, observations: Iterable[BeaconObservation]) -> None:
        """Feed observations directly (in-process convenience)."""
        with self._lock:
            for obs in observations:
                self.store.add(obs)
