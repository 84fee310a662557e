"""Command-line driver.

Exit status: 0 success, 1 unusable data, 2 missing input or bad usage,
3 an invariant violated mid-pipeline (the message names it).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__
from .artifacts import ArtifactWriter
from .config import ConfigError, RunConfig, build_config, coerce, read_config_file
from .ingestion import IngestError
from .model import InvariantViolation
from .pipeline import STAGES, MissingInput, Pipeline, emit_generate, emit_report
from .taxonomy import TaxonomyError

log = logging.getLogger("spendnet")

EXIT_DATA, EXIT_MISSING, EXIT_INVARIANT = 1, 2, 3
PIPELINE_ORDER = tuple(STAGES)
COMMANDS = ("generate",) + PIPELINE_ORDER + ("report", "all")

# flag -> RunConfig field
FLAG_FIELDS = {
    "input_dir": "input_dir", "out_dir": "out_dir", "seed": "seed", "taxonomy": "taxonomy",
    "n_classes": "n_classes", "swap_mult": "swap_multiplier", "replicas": "replicas", "jobs": "jobs",
    "rho_min": "rho_min", "min_common": "min_common", "k_range": "k_range", "variant": "variant",
    "svg": "svg", "min_months": "min_months", "min_purchases": "min_purchases",
    "gap_references": "gap_references", "restarts": "kmeans_restarts", "standardize": "standardize",
    "n_egos": "n_egos", "pareto_shape": "pareto_shape", "planted_classes": "planted_classes",
    "homophily": "homophily", "mean_degree": "mean_degree", "concentration": "concentration",
    "months": "months",
}


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run")
    g.add_argument("--config", help="key=value settings file (flags override it)")
    g.add_argument("--input-dir", help="directory holding interactions.csv, transactions.csv, profiles.csv")
    g.add_argument("--out-dir", help="artifact directory (default: out)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--taxonomy", help="taxonomy.csv replacing the bundled one")
    g.add_argument("-v", "--verbose", action="store_true")
    a = p.add_argument_group("analysis")
    a.add_argument("--n-classes", "--n", dest="n_classes", type=int, help="socioeconomic classes (default 9)")
    a.add_argument("--variant", choices=["ex-cash", "inc-cash"], help="spending vectors for the null model")
    a.add_argument("--swap-mult", type=int, help="swap attempts per edge (default 5)")
    a.add_argument("--replicas", type=int, help="randomized networks (default 100)")
    a.add_argument("--jobs", type=int, help="threads for null-model replicas")
    a.add_argument("--min-months", type=int, help="active months required (default 2)")
    a.add_argument("--min-purchases", type=int, help="purchases a category needs (default 100)")
    a.add_argument("--rho-min", type=float, help="correlation threshold for category links (default 1.5)")
    a.add_argument("--min-common", type=int, help="shared purchasers a link needs (default: scaled to corpus)")
    a.add_argument("--k-range", help="cluster counts to try, e.g. 2-20 or 3,5,15")
    a.add_argument("--restarts", type=int, help="k-means restarts (default 10)")
    a.add_argument("--gap-references", type=int, help="Gap reference datasets (default 50)")
    a.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   help="cluster raw features instead of standardized ones")
    a.add_argument("--svg", action="store_const", const=True, help="also draw SVG figures (report, all)")
    s = p.add_argument_group("generate")
    s.add_argument("--n-egos", type=int)
    s.add_argument("--pareto-shape", type=float)
    s.add_argument("--planted-classes", type=int)
    s.add_argument("--homophily", type=float)
    s.add_argument("--mean-degree", type=float)
    s.add_argument("--concentration", type=float, help="profile concentration")
    s.add_argument("--months", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spendnet", description="Socioeconomic consumption-network pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "generate": "write a synthetic corpus into --out-dir",
        "ingest": "build the joined social graph",
        "classes": "AMP, cumulative curve and equal-sum classes",
        "consumption": "class spending shares, vectors, distances, dispersion, entropy",
        "nullmodel": "L ratios against degree-preserving randomized networks",
        "categories": "category correlations and the thresholded graph",
        "communities": "Louvain communities of the category graph",
        "demographics": "AFS, feature correlations and k-means selection",
        "report": "verify artifacts, summarize, optional SVG figures",
        "all": "every analysis stage, then report",
    }
    for name in COMMANDS:
        _common(sub.add_parser(name, help=helps[name]))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {}
    for flag, fld in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[fld] = coerce(fld, v)[1] if isinstance(v, str) else v
    return build_config(file_values, overrides)


def _header(out: ArtifactWriter, cfg: RunConfig, command: str) -> None:
    out.set("tool", {"name": "spendnet", "version": __version__})
    out.set("last_command", command)
    out.set("parameters", cfg.echo())
    out.set("seeds", {
        "master": cfg.seed,
        **{s: cfg.stage_seed(s) for s in ("generate", "nullmodel", "communities", "demographics")},
    })


def run(command: str, cfg: RunConfig) -> None:
    out = ArtifactWriter(cfg.out_dir)
    _header(out, cfg, command)
    if command == "generate":
        emit_generate(cfg, out)
    elif command == "report":
        emit_report(cfg, out)
    else:
        pipe = Pipeline(cfg)
        pipe.check_inputs()
        names = PIPELINE_ORDER if command == "all" else (command,)
        for name in names:
            t = time.perf_counter()
            STAGES[name](pipe, out)
            log.info("%s done in %.1f s", name, time.perf_counter() - t)
        if command == "all":
            out.save()
            emit_report(cfg, out)
    out.save()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = config_from_args(args)
        run(args.command, cfg)
    except (ConfigError, TaxonomyError) as exc:
        print(f"spendnet: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except MissingInput as exc:
        print(f"spendnet: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except InvariantViolation as exc:
        print(f"spendnet: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (IngestError, ValueError) as exc:
        print(f"spendnet: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
