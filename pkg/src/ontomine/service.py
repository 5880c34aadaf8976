"""HTTP review service backing the human-in-the-loop queue UI.

All mutation goes through a single serialized writer that appends to the
decision log before acknowledging, so replaying the log over the queue file
reconstructs the exact state after a crash.
"""

from __future__ import annotations

import json
import threading
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import AnnotationSet
from .evaluation import cohen_kappa
from .ontology import Code, OntologyFormatError
from .refinement import (
    AnnotationFlag,
    Decision,
    DecisionKind,
    FlagCategory,
    ReviewQueue,
    apply_decisions,
)


class DecisionRequest(BaseModel):
    decision: str
    code: str | None = None
    reviewer: str = "anonymous"


class AlreadyDecidedError(Exception):
    pass


def human_agrees_annotation_valid(flag: AnnotationFlag) -> bool:
    """Map a human decision onto "the annotation is valid", mirroring the verifier's claim."""
    kind = flag.decision.kind
    if flag.category is FlagCategory.FP:
        return kind in (DecisionKind.ACCEPT, DecisionKind.EDIT)
    return kind in (DecisionKind.REJECT, DecisionKind.EDIT)


class ReviewStore:
    """Flag state plus the append-only decision log."""

    def __init__(self, queue: ReviewQueue, prior: AnnotationSet, decision_log: str | Path):
        self.queue = queue
        self.prior = prior
        self.decision_log = Path(decision_log)
        self.flags = {f.flag_id: f for f in queue.flags}
        self._lock = threading.Lock()
        if self.decision_log.exists():
            self._replay()

    def _replay(self) -> None:
        with self.decision_log.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                flag = self.flags.get(row["flag_id"])
                if flag is None or flag.decision is not None:
                    continue
                flag.decision = Decision(
                    kind=DecisionKind(row["decision"]),
                    code=Code.parse(row["code"]) if row.get("code") else None,
                )
                flag.decided_by = row.get("decided_by")
                flag.decided_at = row.get("decided_at")

    def decide(self, flag_id: str, kind: str, code: str | None, reviewer: str) -> AnnotationFlag:
        with self._lock:
            flag = self.flags.get(flag_id)
            if flag is None:
                raise KeyError(flag_id)
            if flag.decision is not None:
                raise AlreadyDecidedError(flag_id)
            try:
                decision_kind = DecisionKind(kind)
            except ValueError:
                raise ValueError(f"unknown decision kind {kind!r}") from None
            parsed_code: Code | None = None
            if decision_kind is DecisionKind.EDIT:
                if not code:
                    raise ValueError("edit decisions require a code")
                parsed_code = Code.parse(code)
            decided_at = datetime.now(timezone.utc).isoformat()
            row = {
                "flag_id": flag_id,
                "decision": decision_kind.value,
                "code": str(parsed_code) if parsed_code else None,
                "decided_by": reviewer,
                "decided_at": decided_at,
            }
            # log first: an acknowledged decision must survive a crash
            self.decision_log.parent.mkdir(parents=True, exist_ok=True)
            with self.decision_log.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                fh.flush()
            flag.decision = Decision(kind=decision_kind, code=parsed_code)
            flag.decided_by = reviewer
            flag.decided_at = decided_at
            return flag

    def pending(self) -> list[AnnotationFlag]:
        return [f for f in self.queue.flags if f.decision is None]

    def decided(self) -> list[AnnotationFlag]:
        return [f for f in self.queue.flags if f.decision is not None]

    def kappa(self) -> float | None:
        verdicts = []
        humans = []
        for flag in self.decided():
            if flag.verifier_verdict is None:
                continue
            verdicts.append(bool(flag.verifier_verdict))
            humans.append(human_agrees_annotation_valid(flag))
        if not verdicts:
            return None
        return cohen_kappa(verdicts, humans)

    def export(self) -> AnnotationSet:
        """Current refined set; undecided flags keep the prior state for now."""
        effective = ReviewQueue(
            flags=[
                f if f.decision is not None else replace(f, decision=Decision(DecisionKind.REJECT))
                for f in self.queue.flags
            ],
            no_flag=self.queue.no_flag,
        )
        return apply_decisions(effective, self.prior)


def create_app(store: ReviewStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ontomine review service")

    @app.get("/api/flags")
    def list_flags(
        status: str | None = Query(default=None),
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
        category: str | None = Query(default=None),
    ):
        items = store.queue.flags
        if status == "pending":
            items = [f for f in items if f.decision is None]
        elif status == "decided":
            items = [f for f in items if f.decision is not None]
        elif status is not None:
            raise HTTPException(status_code=422, detail=f"unknown status {status!r}")
        if category is not None:
            try:
                wanted = FlagCategory(category)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown category {category!r}")
            items = [f for f in items if f.category is wanted]
        start = (page - 1) * page_size
        return {
            "total": len(items),
            "page": page,
            "page_size": page_size,
            "items": [f.to_json() for f in items[start : start + page_size]],
        }

    @app.get("/api/flags/{flag_id}")
    def get_flag(flag_id: str):
        flag = store.flags.get(flag_id)
        if flag is None:
            raise HTTPException(status_code=404, detail=f"unknown flag {flag_id!r}")
        return flag.to_json()

    @app.post("/api/flags/{flag_id}/decision")
    def post_decision(flag_id: str, body: DecisionRequest):
        try:
            flag = store.decide(flag_id, body.decision, body.code, body.reviewer)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown flag {flag_id!r}")
        except AlreadyDecidedError:
            raise HTTPException(status_code=409, detail=f"flag {flag_id!r} already decided")
        except (ValueError, OntologyFormatError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return flag.to_json()

    @app.get("/api/stats")
    def stats():
        by_category = {c.value: 0 for c in FlagCategory}
        for flag in store.queue.flags:
            by_category[flag.category.value] += 1
        return {
            "pending": len(store.pending()),
            "decided": len(store.decided()),
            "no_flag": store.queue.no_flag_count,
            "by_category": by_category,
            "kappa": store.kappa(),
        }

    @app.get("/api/export")
    def export():
        lines = []
        for e in store.export():
            obj = {"doc_id": e.doc_id, "mention": e.mention, "code": str(e.code)}
            if e.context is not None:
                obj["context"] = e.context
            lines.append(json.dumps(obj, ensure_ascii=False))
        return PlainTextResponse("\n".join(lines) + ("\n" if lines else ""))

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
