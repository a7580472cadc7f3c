"""HTTP annotation service: serves layout-pair tasks, persists votes in an
append-only log, tracks progress, and exports the labeled dataset.

The core logic lives in AnnotationService (plain object, fully testable
in-process); a thin stdlib HTTP layer maps the five endpoints onto it and
also serves the static UI assets. Votes are stored canonically as
(j, k) with j < k regardless of how the pair was presented on screen.
"""

from __future__ import annotations

import json
import os
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .errors import ParameterError, ValidationError
from .labeling import (
    Vote,
    build_vote_dataset,
    pair_to_json,
    vote_from_json,
    vote_to_json,
)

ORDER_JK = "JK"  # left image is layout j
ORDER_KJ = "KJ"  # left image is layout k


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    graph_id: str
    pair: tuple[int, int]
    presentation_order: str  # ORDER_JK | ORDER_KJ
    image_left: str
    image_right: str

    def to_doc(self) -> dict:
        return {
            "task_id": self.task_id,
            "graph_id": self.graph_id,
            "pair": list(self.pair),
            "presentation_order": self.presentation_order,
            "images": [self.image_left, self.image_right],
        }


def _task_id(graph_id: str, pair: tuple[int, int], order: str) -> str:
    return f"{graph_id}:{pair[0]}:{pair[1]}:{order}"


def _parse_task_id(task_id: str) -> tuple[str, tuple[int, int], str]:
    try:
        graph_id, j, k, order = task_id.rsplit(":", 3)
        pair = (int(j), int(k))
        if order not in (ORDER_JK, ORDER_KJ) or not pair[0] < pair[1]:
            raise ValueError(task_id)
        return graph_id, pair, order
    except ValueError:
        raise ValidationError(f"malformed task id {task_id!r}")


class AnnotationService:
    """Vote collection over a fixed universe of layout pairs.

    The vote log is an append-only JSONL file, fsynced per record; replaying
    it reconstructs the full service state after a restart. Submissions are
    idempotent per (participant, pair): replays and double-clicks return the
    original sequence number without writing anything.
    """

    def __init__(self, pair_universe: list[tuple[str, tuple[int, int]]], log_path, seed: int = 0):
        if not pair_universe:
            raise ParameterError("annotation service needs a non-empty pair universe")
        for graph_id, (j, k) in pair_universe:
            if not j < k:
                raise ValidationError(f"pair universe entry {graph_id}{(j, k)} is not ordered")
        self.pairs = sorted(set((g, tuple(p)) for g, p in pair_universe))
        self.log_path = str(log_path)
        self._rng = random.Random(f"serve:{seed}")
        self._lock = threading.Lock()
        self._votes: list[Vote] = []
        self._seq_by_key: dict[tuple[str, str, tuple[int, int]], int] = {}
        self._replay()

    # -- persistence --------------------------------------------------------

    def _replay(self) -> None:
        if not os.path.exists(self.log_path):
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                vote = vote_from_json(doc)
                self._register(vote)

    def _append_durably(self, vote: Vote) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(vote_to_json(vote) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _register(self, vote: Vote) -> int:
        self._votes.append(vote)
        seq = len(self._votes)
        self._seq_by_key[(vote.participant_id, vote.graph_id, vote.pair)] = seq
        return seq

    # -- operations ---------------------------------------------------------

    def next_task(self, participant_id: str) -> AnnotationTask | None:
        """A uniformly random pair this participant has not voted on, with a
        random left/right presentation; None when they are done."""
        if not participant_id:
            raise ValidationError("participant id must be non-empty")
        with self._lock:
            remaining = [
                (g, p) for g, p in self.pairs if (participant_id, g, p) not in self._seq_by_key
            ]
            if not remaining:
                return None
            graph_id, pair = remaining[self._rng.randrange(len(remaining))]
            order = ORDER_JK if self._rng.random() < 0.5 else ORDER_KJ
        left, right = pair if order == ORDER_JK else (pair[1], pair[0])
        return AnnotationTask(
            task_id=_task_id(graph_id, pair, order),
            graph_id=graph_id,
            pair=pair,
            presentation_order=order,
            image_left=f"/api/image/{graph_id}/{left}.png",
            image_right=f"/api/image/{graph_id}/{right}.png",
        )

    def submit_vote(self, task_id: str, side: str, score: int, participant_id: str) -> int:
        """Record one vote; returns its sequence number. The screen side is
        translated through the task's presentation order into the canonical
        preferred layout index before anything is persisted."""
        if side not in ("left", "right"):
            raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
        if not isinstance(score, int) or isinstance(score, bool) or not 0 <= score <= 5:
            raise ValidationError(f"score must be an integer in [0, 5], got {score!r}")
        if not participant_id:
            raise ValidationError("participant id must be non-empty")
        graph_id, pair, order = _parse_task_id(task_id)
        if (graph_id, pair) not in set(self.pairs):
            raise KeyError(f"unknown task {task_id!r}")
        j, k = pair
        left = j if order == ORDER_JK else k
        right = k if order == ORDER_JK else j
        preferred = left if side == "left" else right
        vote = Vote(
            graph_id=graph_id,
            pair=pair,
            participant_id=participant_id,
            preferred=preferred,
            score=score,
            timestamp=datetime.now(timezone.utc),
        )
        with self._lock:
            existing = self._seq_by_key.get((participant_id, graph_id, pair))
            if existing is not None:
                return existing
            self._append_durably(vote)
            return self._register(vote)

    def progress(self) -> dict:
        with self._lock:
            voted_pairs = {(v.graph_id, v.pair) for v in self._votes}
            per_participant: dict[str, int] = {}
            for v in self._votes:
                per_participant[v.participant_id] = per_participant.get(v.participant_id, 0) + 1
            return {
                "total_pairs": len(self.pairs),
                "pairs_with_votes": len(voted_pairs),
                "votes_total": len(self._votes),
                "per_participant": per_participant,
            }

    def export_dataset(self) -> tuple[str, dict]:
        """Labeled pairs from the full vote log as JSONL, plus counts."""
        with self._lock:
            votes = list(self._votes)
        labeled, discarded = build_vote_dataset(votes)
        body = "".join(pair_to_json(p) + "\n" for p in labeled)
        return body, {"labeled": len(labeled), "discarded": discarded}

    def votes_snapshot(self) -> list[Vote]:
        with self._lock:
            return list(self._votes)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def pair_universe_from_pairs_file(path) -> list[tuple[str, tuple[int, int]]]:
    universe = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            universe.append((doc["graph_id"], (int(doc["j"]), int(doc["k"]))))
    return universe


def pair_universe_from_image_dir(image_dir) -> list[tuple[str, tuple[int, int]]]:
    """All 10 pairs for every graph that has five rendered layouts."""
    by_graph: dict[str, set[int]] = {}
    for name in os.listdir(image_dir):
        if not name.endswith(".png") or "__" not in name:
            continue
        graph_id, idx = name[: -len(".png")].rsplit("__", 1)
        by_graph.setdefault(graph_id, set()).add(int(idx))
    universe = []
    for graph_id, indices in sorted(by_graph.items()):
        if indices == set(range(5)):
            for j in range(5):
                for k in range(j + 1, 5):
                    universe.append((graph_id, (j, k)))
    return universe


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService
    image_dir: str
    static_dir: str | None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, doc, status=200):
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, body: bytes, content_type: str, status=200, download: str | None = None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        if download:
            self.send_header("Content-Disposition", f"attachment; filename={download}")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if url.path.startswith("/api/task"):
                params = parse_qs(url.query)
                participant = params.get("participant", [""])[0]
                task = self.service.next_task(participant)
                if task is None:
                    progress = self.service.progress()
                    votes = progress["per_participant"].get(participant, 0)
                    self._send_json({"done": True, "votes": votes})
                else:
                    self._send_json(task.to_doc())
            elif url.path == "/api/progress":
                self._send_json(self.service.progress())
            elif url.path == "/api/export":
                body, counts = self.service.export_dataset()
                self._send_bytes(body.encode(), "application/jsonl", download="labeled_pairs.jsonl")
            elif len(parts) == 4 and parts[0] == "api" and parts[1] == "image":
                graph_id = parts[2]
                name = parts[3]
                if not name.endswith(".png"):
                    raise KeyError(self.path)
                idx = int(name[: -len(".png")])
                file_path = os.path.join(self.image_dir, f"{graph_id}__{idx}.png")
                if not os.path.isfile(file_path):
                    raise KeyError(self.path)
                with open(file_path, "rb") as fh:
                    self._send_bytes(fh.read(), "image/png")
            else:
                self._serve_static(url.path)
        except KeyError:
            self._send_json({"error": "not found"}, status=404)
        except ValidationError as exc:
            self._send_json({"error": str(exc)}, status=400)

    def _serve_static(self, path: str):
        if self.static_dir is None:
            raise KeyError(path)
        rel = "index.html" if path in ("", "/") else path.lstrip("/")
        full = os.path.realpath(os.path.join(self.static_dir, rel))
        if not full.startswith(os.path.realpath(self.static_dir)) or not os.path.isfile(full):
            raise KeyError(path)
        types = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
            ".map": "application/json",
        }
        ext = os.path.splitext(full)[1]
        with open(full, "rb") as fh:
            self._send_bytes(fh.read(), types.get(ext, "application/octet-stream"))

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/vote":
            self._send_json({"error": "not found"}, status=404)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length) or b"{}")
            seq = self.service.submit_vote(
                task_id=doc.get("task_id", ""),
                side=doc.get("side", ""),
                score=doc.get("score", -1),
                participant_id=doc.get("participant", ""),
            )
            self._send_json({"seq": seq})
        except KeyError:
            self._send_json({"error": "unknown task"}, status=404)
        except (ValidationError, json.JSONDecodeError) as exc:
            self._send_json({"error": str(exc)}, status=400)


def make_server(
    service: AnnotationService,
    image_dir,
    port: int = 0,
    static_dir=None,
) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks an ephemeral port."""
    handler = type(
        "BoundHandler",
        (_Handler,),
        {"service": service, "image_dir": str(image_dir), "static_dir": str(static_dir) if static_dir else None},
    )
    return ThreadingHTTPServer(("127.0.0.1", port), handler)
