"""HTTP session service for interactive structure design.

Sessions hold a frozen scaffold, a prior specification, a candidate
gallery, and an undo history. Sampling runs asynchronously: POSTing to the
sample endpoint returns a job id to poll. All state is in memory; mutating
requests on one session serialize through its lock, and every structure
crossing the wire uses the same {"elements", "positions"} shape as the
force-provider protocol.

Undo restores the previous scaffold but never rewinds the session's RNG,
so re-sampling after an undo yields fresh candidates by design.
"""

from __future__ import annotations

import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .geometry import Structure, shape_point
from .metrics import perceive_bonds, validity
from .providers import ForceProvider
from .samplers import (
    PriorSpec,
    SamplerConfig,
    ShapeConstraint,
    build_prior,
    run_sampler,
)
from .schedules import ScheduleParams
from .shapes import ShapeModel, absolute_target, named_targets

__all__ = ["create_app", "DEFAULT_ELEMENT_FREQUENCIES"]

logger = logging.getLogger(__name__)

# Convenience frequencies for the "randomize elements" prior option,
# roughly the composition of small organic molecules. Override via
# create_app(element_frequencies=...).
DEFAULT_ELEMENT_FREQUENCIES = {"H": 0.51, "C": 0.35, "N": 0.06, "O": 0.07, "F": 0.01}


def _error(status: int, code: str, message: str, fieldname: str | None = None):
    payload = {"code": code, "message": message}
    if fieldname is not None:
        payload["field"] = fieldname
    return JSONResponse(status_code=status, content=payload)


def _structure_payload(structure: Structure | None):
    if structure is None:
        return None
    return {
        "elements": list(structure.elements),
        "positions": structure.positions.tolist(),
    }


def _bond_payload(structure: Structure | None):
    """Bonded index pairs for a structure payload, None when unavailable.

    Bond perception lives server-side so every client renders the same
    sticks; unknown elements just mean no sticks, not an error.
    """
    if structure is None:
        return None
    try:
        return [[int(i), int(j)] for i, j in perceive_bonds(structure)]
    except ValueError:
        return None


class PriorRequest(BaseModel):
    center: list[float] | None = None
    elements: list[str] | None = None
    randomize_count: int | None = None
    covariance: list[list[float]] | None = None
    named: str | None = None
    scale: float | None = None
    sigma_max: float | None = None


class SampleRequest(BaseModel):
    count: int = 3
    steps: int | None = None
    seed: int | None = None


class AcceptRequest(BaseModel):
    index: int
    remove: list[int] = []


class CreateSessionRequest(BaseModel):
    seed: int | None = None
    scaffold: dict | None = None


@dataclass
class Candidate:
    structure: Structure
    valid: bool
    reason: str | None
    shape: list | None
    nfe: int

    def payload(self) -> dict:
        return {
            "structure": _structure_payload(self.structure),
            "bonds": _bond_payload(self.structure),
            "valid": self.valid,
            "reason": self.reason,
            "shape_point": self.shape,
            "nfe": self.nfe,
        }


@dataclass
class Session:
    id: str
    seed: int
    scaffold: Structure | None = None
    prior: dict | None = None
    gallery: list = field(default_factory=list)
    history: list = field(default_factory=list)
    samples_started: int = 0
    lock: threading.RLock = field(default_factory=threading.RLock)

    def payload(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "scaffold": _structure_payload(self.scaffold),
            "scaffold_bonds": _bond_payload(self.scaffold),
            "prior": self.prior,
            "gallery": [c.payload() for c in self.gallery],
            "history_depth": len(self.history),
            "samples_started": self.samples_started,
        }


@dataclass
class Job:
    id: str
    session_id: str
    status: str = "pending"
    error: str | None = None
    result: dict | None = None

    def payload(self) -> dict:
        body = {"id": self.id, "session_id": self.session_id, "status": self.status}
        if self.error is not None:
            body["error"] = self.error
        if self.result is not None:
            body["result"] = self.result
        return body


def _parse_structure(data: dict, fieldname: str) -> Structure:
    if not isinstance(data, dict) or "elements" not in data or "positions" not in data:
        raise ValueError(f"{fieldname} must carry 'elements' and 'positions'")
    return Structure(data["elements"], data["positions"])


def create_app(
    provider: ForceProvider,
    shape_model: ShapeModel | None = None,
    sampler_steps: int = 64,
    max_candidates: int = 12,
    workers: int = 2,
    element_frequencies: dict | None = None,
    provider_label: str = "oracle",
) -> FastAPI:
    """Build the session-service app around a force provider."""
    app = FastAPI(title="structure design service")
    # Browser clients are served as static files from some other origin,
    # so the API has to answer cross-origin requests. Sessions carry no
    # credentials; a wildcard is fine for a local design service.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    jobs: dict[str, Job] = {}
    registry_lock = threading.RLock()
    executor = ThreadPoolExecutor(max_workers=workers)
    frequencies = dict(element_frequencies or DEFAULT_ELEMENT_FREQUENCIES)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = [str(p) for p in first.get("loc", []) if p != "body"]
        return _error(
            400,
            "validation",
            first.get("msg", "invalid request"),
            fieldname=".".join(loc) or None,
        )

    def get_session(session_id: str) -> Session | None:
        with registry_lock:
            return sessions.get(session_id)

    @app.get("/health")
    def health():
        return {"status": "ok", "provider": provider_label}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionRequest | None = None):
        body = body or CreateSessionRequest()
        seed = (
            int(body.seed)
            if body.seed is not None
            else int(np.random.SeedSequence().entropy % (2 ** 31))
        )
        scaffold = None
        if body.scaffold is not None:
            try:
                scaffold = _parse_structure(body.scaffold, "scaffold")
            except ValueError as exc:
                return _error(400, "validation", str(exc), fieldname="scaffold")
        session = Session(id=uuid.uuid4().hex[:12], seed=seed, scaffold=scaffold)
        with registry_lock:
            sessions[session.id] = session
        return session.payload()

    @app.get("/sessions/{session_id}")
    def get_state(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown-session", f"no session {session_id!r}")
        with session.lock:
            return session.payload()

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        with registry_lock:
            if session_id not in sessions:
                return _error(404, "unknown-session", f"no session {session_id!r}")
            del sessions[session_id]
        return {"deleted": session_id}

    @app.put("/sessions/{session_id}/prior")
    def set_prior(session_id: str, body: PriorRequest):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown-session", f"no session {session_id!r}")
        if body.elements is None and body.randomize_count is None:
            return _error(
                400, "validation",
                "supply the free-atom elements or randomize_count",
                fieldname="elements",
            )
        if body.elements is not None and body.randomize_count is not None:
            return _error(
                400, "validation",
                "elements and randomize_count are mutually exclusive",
                fieldname="randomize_count",
            )
        if body.randomize_count is not None and body.randomize_count < 1:
            return _error(
                400, "validation", "randomize_count must be positive",
                fieldname="randomize_count",
            )
        if body.center is not None and len(body.center) != 3:
            return _error(
                400, "validation", "center needs 3 components", fieldname="center"
            )
        if body.covariance is not None and body.named is not None:
            return _error(
                400, "validation",
                "covariance and named are mutually exclusive",
                fieldname="named",
            )
        if body.covariance is not None:
            cov = np.asarray(body.covariance, dtype=np.float64)
            if cov.shape != (3, 3):
                return _error(
                    400, "validation", "covariance must be 3x3", fieldname="covariance"
                )
            if not np.allclose(cov, cov.T, atol=1e-8):
                return _error(
                    400, "validation", "covariance must be symmetric",
                    fieldname="covariance",
                )
            if np.linalg.eigvalsh(cov).min() <= 0:
                return _error(
                    400, "validation", "covariance must be positive definite",
                    fieldname="covariance",
                )
        if body.named is not None:
            if body.named not in named_targets():
                return _error(
                    400, "validation",
                    f"named shape must be one of {sorted(named_targets())}",
                    fieldname="named",
                )
            if body.scale is None and shape_model is None:
                return _error(
                    400, "validation",
                    "named shapes need a scale when no shape model is loaded",
                    fieldname="scale",
                )
            if body.scale is not None and body.scale <= 0:
                return _error(
                    400, "validation", "scale must be positive", fieldname="scale"
                )
        if body.sigma_max is not None and body.sigma_max <= 0:
            return _error(
                400, "validation", "sigma_max must be positive", fieldname="sigma_max"
            )
        with session.lock:
            session.prior = {
                k: v for k, v in body.model_dump().items() if v is not None
            }
            return session.payload()

    def resolve_prior(session: Session, rng: np.random.Generator):
        """Turn the stored prior dict into (spec, free_elements, shape)."""
        prior = dict(session.prior or {})
        if not prior:
            raise ValueError("set a prior before sampling")
        if "elements" in prior:
            elements = tuple(prior["elements"])
        else:
            count = int(prior["randomize_count"])
            names = sorted(frequencies)
            probs = np.array([frequencies[n] for n in names], dtype=np.float64)
            probs /= probs.sum()
            elements = tuple(rng.choice(names, size=count, p=probs))
        center = prior.get("center")
        covariance = None
        if "covariance" in prior:
            covariance = np.asarray(prior["covariance"], dtype=np.float64)
        elif "named" in prior:
            relative = named_targets()[prior["named"]]
            if prior.get("scale") is not None:
                trace = float(prior["scale"])
            else:
                trace = float(
                    np.trace(shape_model.sample_cov(len(elements), rng))
                )
            covariance = np.diag(absolute_target(relative, trace))
        sigma_max = float(prior.get("sigma_max", 30.0))
        if session.scaffold is not None and session.scaffold.n > 0:
            spec = PriorSpec.mixed(
                session.scaffold,
                covariance=None if covariance is None else covariance,
                sigma_max=sigma_max,
                center=center,
            )
        elif covariance is not None:
            spec = PriorSpec.shaped(covariance, center=center)
        else:
            spec = PriorSpec.isotropic(sigma_max, center=center)
        shape = None
        if covariance is not None:
            lam = np.sort(np.linalg.eigvalsh(covariance))[::-1]
            shape = ShapeConstraint(tuple(lam))
        return spec, elements, shape

    def run_job(job: Job, session: Session, body: SampleRequest, batch_index: int):
        try:
            candidates = []
            steps = int(body.steps or sampler_steps)
            seed = session.seed if body.seed is None else int(body.seed)
            for index in range(body.count):
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, batch_index, index])
                )
                spec, elements, shape = resolve_prior(session, rng)
                prior = build_prior(spec, elements, rng)
                cfg = SamplerConfig(
                    kind="dd",
                    stochastic=True,
                    shape=shape,
                    scaffold_mask=spec.scaffold_mask(prior.n) if spec.scaffold else None,
                    schedule=ScheduleParams(steps=steps),
                )
                structure, trace = run_sampler(prior, provider, cfg, rng)
                verdict = validity(structure)
                try:
                    point = shape_point(structure)
                    shape_xy = [point.npr1, point.npr2]
                except ValueError:
                    shape_xy = None
                candidates.append(
                    Candidate(
                        structure=structure,
                        valid=verdict.valid,
                        reason=verdict.reason,
                        shape=shape_xy,
                        nfe=trace.nfe,
                    )
                )
            with session.lock:
                session.gallery = candidates
            job.result = {"candidates": [c.payload() for c in candidates]}
            job.status = "done"
        except Exception as exc:  # sampling failures surface through the job
            logger.exception("sampling job %s failed", job.id)
            job.error = str(exc)
            job.status = "error"

    @app.post("/sessions/{session_id}/sample", status_code=202)
    def sample(session_id: str, body: SampleRequest | None = None):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown-session", f"no session {session_id!r}")
        body = body or SampleRequest()
        if not (1 <= body.count <= max_candidates):
            return _error(
                400, "validation",
                f"count must lie in [1, {max_candidates}]", fieldname="count",
            )
        if body.steps is not None and body.steps < 2:
            return _error(400, "validation", "steps must be at least 2", fieldname="steps")
        with session.lock:
            if session.prior is None:
                return _error(
                    400, "no-prior", "set a prior before sampling", fieldname="prior"
                )
            batch_index = session.samples_started
            session.samples_started += 1
        job = Job(id=uuid.uuid4().hex[:12], session_id=session_id)
        with registry_lock:
            jobs[job.id] = job

        def runner():
            job.status = "running"
            run_job(job, session, body, batch_index)

        executor.submit(runner)
        return {"job": {"id": job.id, "status": job.status}}

    @app.get("/jobs/{job_id}")
    def job_state(job_id: str):
        with registry_lock:
            job = jobs.get(job_id)
        if job is None:
            return _error(404, "unknown-job", f"no job {job_id!r}")
        return job.payload()

    @app.post("/sessions/{session_id}/accept")
    def accept(session_id: str, body: AcceptRequest):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown-session", f"no session {session_id!r}")
        with session.lock:
            if not (0 <= body.index < len(session.gallery)):
                return _error(
                    400, "validation",
                    f"index must lie in [0, {len(session.gallery) - 1}]"
                    if session.gallery
                    else "gallery is empty",
                    fieldname="index",
                )
            candidate = session.gallery[body.index].structure
            removals = sorted(set(body.remove))
            if removals and (removals[0] < 0 or removals[-1] >= candidate.n):
                return _error(
                    400, "validation",
                    f"remove indices must lie in [0, {candidate.n - 1}]",
                    fieldname="remove",
                )
            if len(removals) >= candidate.n:
                return _error(
                    400, "validation", "cannot remove every atom", fieldname="remove"
                )
            warnings = [
                f"removed non-hydrogen atom {i} ({candidate.elements[i]})"
                for i in removals
                if candidate.elements[i] != "H"
            ]
            keep = [i for i in range(candidate.n) if i not in set(removals)]
            new_scaffold = Structure(
                [candidate.elements[i] for i in keep], candidate.positions[keep]
            )
            session.history.append(session.scaffold)
            session.scaffold = new_scaffold
            session.gallery = []
            payload = session.payload()
            payload["warnings"] = warnings
            return payload

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown-session", f"no session {session_id!r}")
        with session.lock:
            if not session.history:
                return _error(409, "nothing-to-undo", "no accepted step to undo")
            session.scaffold = session.history.pop()
            session.gallery = []
            return session.payload()

    return app
