"""HTTP annotation service: serves the relabel queue to human annotators.

The correction log is the single source of truth: every accepted decision
is appended (and fsynced) before the response goes out, and a restart
replays the log to reconstruct the done-set.  One correction per example
id, first write wins; later submissions get a 409.
"""

from __future__ import annotations

import json
import os
import threading
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import CorrectionRecord, LabelSpace
from .loop import QueueItem, RelabelQueue


class LogCorruptError(RuntimeError):
    pass


class QueueState:
    """Queue bookkeeping plus the append-only log.  Mutations serialize
    through one lock; the log is never rewritten or truncated."""

    def __init__(self, queue: RelabelQueue, label_space: LabelSpace, log_path):
        self.label_space = label_space
        self.log_path = str(log_path)
        self.items = {it.example_id: it for it in queue.items}
        self.order = [it.example_id for it in queue.items]
        self.lock = threading.Lock()
        self.clock = 0
        self._replay()

    def _replay(self) -> None:
        if not os.path.exists(self.log_path):
            return
        seen = set()
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = CorrectionRecord.from_json(line)
                if rec.id in seen:
                    raise LogCorruptError(
                        f"{self.log_path}: line {lineno}: duplicate decision for id {rec.id!r}"
                    )
                seen.add(rec.id)
                if rec.id in self.items:
                    self.items[rec.id].status = "done"
                self.clock = max(self.clock, rec.ts)

    def _append(self, record: CorrectionRecord) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json())
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())

    def next_item(self) -> Optional[tuple[QueueItem, int, int]]:
        """First pending item in queue order; skipped items come back after
        all pending ones.  Returns (item, position, total) or None."""
        with self.lock:
            total = len(self.order)
            for status_pass in ("pending", "skipped"):
                for pos, eid in enumerate(self.order, start=1):
                    if self.items[eid].status == status_pass:
                        return self.items[eid], pos, total
            return None

    def submit_label(self, example_id: str, label: str) -> tuple[int, dict]:
        with self.lock:
            item = self.items.get(example_id)
            if item is None:
                return 404, {"error": "unknown_id", "id": example_id}
            if item.status == "done":
                return 409, {"error": "already_done", "id": example_id}
            if label not in self.label_space:
                return 422, {"error": "invalid_label", "label": label}
            self.clock += 1
            record = CorrectionRecord(
                id=example_id,
                new_label=label,
                source="human",
                ref_prev_label=item.ref_prev_label,
                ref_pred_label=item.ref_pred_label,
                ts=self.clock,
            )
            self._append(record)
            item.status = "done"
            return 200, {"ok": True, "id": example_id}

    def submit_skip(self, example_id: str) -> tuple[int, dict]:
        with self.lock:
            item = self.items.get(example_id)
            if item is None:
                return 404, {"error": "unknown_id", "id": example_id}
            if item.status == "done":
                return 409, {"error": "already_done", "id": example_id}
            item.status = "skipped"
            return 200, {"ok": True, "id": example_id}

    def progress(self) -> dict:
        with self.lock:
            done = sum(1 for it in self.items.values() if it.status == "done")
            skipped = sum(1 for it in self.items.values() if it.status == "skipped")
            pending = len(self.items) - done - skipped
            per_class: dict[str, int] = {c: 0 for c in self.label_space.classes}
            if os.path.exists(self.log_path):
                with open(self.log_path, "r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            rec = CorrectionRecord.from_json(line)
                            if rec.new_label in per_class:
                                per_class[rec.new_label] += 1
            return {
                "total": len(self.items),
                "done": done,
                "skipped": skipped,
                "pending": pending,
                "per_class": per_class,
            }


class LabelBody(BaseModel):
    label: str


def create_app(
    queue: RelabelQueue,
    label_space: LabelSpace,
    log_path,
    static_dir: Optional[str] = None,
) -> FastAPI:
    state = QueueState(queue, label_space, log_path)
    app = FastAPI(title="relabel service")
    app.state.queue_state = state

    @app.get("/api/queue/next")
    def queue_next():
        nxt = state.next_item()
        if nxt is None:
            return Response(status_code=204)
        item, pos, total = nxt
        return {
            "id": item.example_id,
            "text": item.text,
            "references": {
                "prev_label": item.ref_prev_label,
                "pred_label": item.ref_pred_label,
                "pred_prob": round(item.ref_pred_prob, 3),
            },
            "position": pos,
            "total": total,
        }

    @app.post("/api/items/{item_id}/label")
    def label_item(item_id: str, body: LabelBody):
        code, payload = state.submit_label(item_id, body.label)
        return JSONResponse(status_code=code, content=payload)

    @app.post("/api/items/{item_id}/skip")
    def skip_item(item_id: str):
        code, payload = state.submit_skip(item_id)
        return JSONResponse(status_code=code, content=payload)

    @app.get("/api/progress")
    def progress():
        return state.progress()

    @app.get("/api/labelspace")
    def labelspace():
        return {"classes": list(label_space.classes)}

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(queue: RelabelQueue, label_space: LabelSpace, log_path, host="127.0.0.1", port=8000, static_dir=None):
    """Run the annotation service until interrupted."""
    import uvicorn

    app = create_app(queue, label_space, log_path, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
