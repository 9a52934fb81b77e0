"""FastAPI application exposing training, attacks, and defense analytics.

The app owns an artifact root; every training run writes under
<out_root>/<config-hash>/ and read-only endpoints resolve their run the same
way. Domain ValueErrors map to 400, missing checkpoints to 404.
"""

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, experiment
from . import schemas


def create_app(out_root="out") -> FastAPI:
    app = FastAPI(title="hashfed", version=__version__)
    root = Path(out_root)

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_handler(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__, service="hashfed")

    @app.post("/gen-codes", response_model=schemas.GenCodesResponse)
    def gen_codes(req: schemas.GenCodesRequest):
        return experiment.gen_codes_report(req.classes, req.code_bits, req.seed, root)

    @app.post("/train", response_model=schemas.RunSummary)
    def train(req: schemas.TrainRequest):
        return experiment.run_experiment(req.config, root)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        return experiment.eval_report(req.config, root)

    @app.post("/attack/reconstruct", response_model=schemas.ReconstructResponse)
    def attack_reconstruct(req: schemas.ReconstructRequest):
        return experiment.reconstruction_report(
            req.config,
            root,
            party=req.party,
            lam=req.lam,
            steps=req.steps,
            lr=req.lr,
            seed=req.seed,
            restarts=req.restarts,
            dump_pgm=req.dump_pgm,
        )

    @app.post("/attack/pgd", response_model=schemas.PgdResponse)
    def attack_pgd(req: schemas.PgdRequest):
        return experiment.pgd_report(
            req.config,
            root,
            omega=req.omega,
            eta=req.eta,
            steps=req.steps,
            targets=req.targets,
            party=req.party,
            seed=req.seed,
        )

    @app.post("/attack/pla", response_model=schemas.PlaResponse)
    def attack_pla(req: schemas.PlaRequest):
        return experiment.pla_report(req.config, root, party=req.party, seed=req.seed)

    @app.post("/detect", response_model=schemas.DetectResponse)
    def detect(req: schemas.DetectRequest):
        return experiment.detect_report(req.config, root, reference=req.reference)

    @app.post("/dp-sweep", response_model=schemas.DpSweepResponse)
    def dp_sweep(req: schemas.DpSweepRequest):
        return experiment.dp_sweep_report(
            req.config, root, epsilons=req.epsilons, seed=req.seed, repeats=req.repeats
        )

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest):
        return experiment.ablate_report(req.config, root, req.toggle)

    return app
