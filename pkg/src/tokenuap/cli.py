"""Command-line pipeline: train a classifier, attack it, score and render the attack.

Every subcommand takes ``--config`` (a JSON file), ``--seed`` and ``--out``.
Relative paths inside the config are resolved against the config file's
directory.  Outputs embed the config hash and seeds; reruns with the same
inputs produce byte-identical files.
"""

import argparse
import copy
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .advgen import attack_success_rate, build_substitution_table, generate_adversarial
from .classifier import ClassifierConfig, TrainHistory, evaluate_accuracy, train_classifier
from .exceptions import GenerationSkipped
from .metrics import AttackReport, ni_vocab
from .perturbation import METHODS, PerturbTrainConfig, cell_seed, run_sweep, train_perturbation
from .serialization import (
    attack_report_records,
    canonical_json,
    load_checkpoint,
    load_perturbation,
    ni_report_records,
    save_checkpoint,
    save_perturbation,
    write_jsonl,
)
from .text_data import Vocabulary, build_vocab, encode_examples, load_tsv, split_train_eval, subsample

log = logging.getLogger("tokenuap")

DEFAULT_CONFIG = {
    "data": {
        "train": None,
        "test": None,
        "text_cols": [0],
        "label_col": 1,
        "has_header": True,
        "min_count": 1,
        "eval_ratio": 0.1,
    },
    "classifier": {},
    "perturbation": {},
    "attack": {"eps_grid": [0.05, 0.1, 0.15, 0.2], "methods": list(METHODS)},
    "ni": {"k": 5},
    "data_ratio": {
        "ratios": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "eps": 0.15,
        "optimizer": "sgd",
        "momentum": 0.9,
        "normalize_gradients": False,
    },
    "seed": 0,
    "out": "runs",
}

CHECKPOINT = "classifier.ckpt"
VOCAB = "vocab.tsv"


class CliError(Exception):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, seed=None, out=None):
    """Defaults, overlaid with the JSON file, overlaid with flag overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config {path} is not valid JSON: {exc}") from None
        cfg = _merge(cfg, user)
        base = path.parent
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = str(out)
    cfg["_base"] = str(base)
    return cfg


def config_hash(cfg):
    """Hash of everything that influences results (not the output location)."""
    relevant = {k: v for k, v in cfg.items() if k not in ("out", "_base")}
    return hashlib.sha256(canonical_json(relevant).encode("utf-8")).hexdigest()


def _resolve(cfg, p):
    p = Path(p)
    return p if p.is_absolute() else Path(cfg["_base"]) / p


def _data_path(cfg, key):
    value = cfg["data"].get(key)
    if not value:
        raise CliError(f"config has no data.{key} path")
    path = _resolve(cfg, value)
    if not path.is_file():
        raise CliError(f"dataset not found: {path}")
    return path


def _sub_config(cls, section, **extra):
    allowed = {f.name for f in fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise CliError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{**section, **extra})


def _provenance(cfg, **inputs):
    prov = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__}
    for name, path in inputs.items():
        prov[f"{name}_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return prov


def _out_dir(cfg):
    out = _resolve(cfg, cfg["out"]) if cfg["out"] else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_train(cfg, vocab=None):
    """Source train file -> (vocab, label names, train split, eval split)."""
    d = cfg["data"]
    raw = load_tsv(_data_path(cfg, "train"), d["text_cols"], d["label_col"], d["has_header"])
    if vocab is None:
        vocab = build_vocab([r.tokens for r in raw.examples], d["min_count"])
    examples = encode_examples(raw.examples, vocab)
    train, evals = split_train_eval(examples, d["eval_ratio"], cfg["seed"])
    return vocab, raw.label_names, train, evals


def _load_test(cfg, vocab, label_names, path=None):
    d = cfg["data"]
    path = Path(path) if path is not None else _data_path(cfg, "test")
    if not path.is_file():
        raise CliError(f"dataset not found: {path}")
    raw = load_tsv(path, d["text_cols"], d["label_col"], d["has_header"], label_names)
    return encode_examples(raw.examples, vocab), raw


def _checkpoint_path(cfg, args):
    path = Path(args.checkpoint) if args.checkpoint else _out_dir(cfg) / CHECKPOINT
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}")
    return path


def _load_model(cfg, args):
    ckpt = _checkpoint_path(cfg, args)
    vocab_path = Path(args.vocab) if getattr(args, "vocab", None) else ckpt.parent / VOCAB
    if not vocab_path.is_file():
        raise CliError(f"vocabulary not found: {vocab_path}")
    vocab = Vocabulary.load(vocab_path)
    params, header = load_checkpoint(ckpt, vocab)
    return ckpt, vocab, params, header


def _perturb_config(cfg, **extra):
    section = {k: v for k, v in cfg["perturbation"].items() if k != "seed"}
    section.update(extra)
    section.setdefault("eps", 0.1)
    return _sub_config(PerturbTrainConfig, section, seed=cfg["seed"])


def cmd_train_classifier(cfg, args):
    vocab, labels, train, evals = _load_train(cfg)
    ccfg = _sub_config(ClassifierConfig, {k: v for k, v in cfg["classifier"].items() if k != "seed"}, seed=cfg["seed"])
    history = TrainHistory()
    params = train_classifier(train, evals, max(len(labels), 2), len(vocab), ccfg, history)
    out = _out_dir(cfg)
    vocab.save(out / VOCAB)
    prov = _provenance(cfg)
    save_checkpoint(out / CHECKPOINT, params, vocab, {**prov, "labels": labels})
    final = evaluate_accuracy(params, evals)
    records = [{"record": "header", "type": "train-classifier", **prov,
                "n_train": len(train), "n_eval": len(evals), "vocab_size": len(vocab), "labels": labels}]
    records += [{"record": "epoch", **e} for e in history.epochs]
    records.append({"record": "final", "eval_accuracy": final, "best_epoch": history.best_epoch})
    write_jsonl(out / "train_log.jsonl", records)
    print(f"checkpoint: {out / CHECKPOINT} (eval accuracy {final:.4f})")


def _pert_name(method, eps):
    return f"{method}_eps{eps:g}.pert"


def cmd_attack(cfg, args):
    ckpt, vocab, params, header = _load_model(cfg, args)
    _, labels, train, evals = _load_train(cfg, vocab)
    test, _ = _load_test(cfg, vocab, header["meta"].get("labels", labels))
    pcfg = _perturb_config(cfg)
    methods = cfg["attack"].get("methods", list(METHODS))
    report, built = run_sweep(params, train, evals, test, cfg["attack"]["eps_grid"], pcfg, methods, cfg["seed"])
    out = _out_dir(cfg)
    pdir = out / "perturbations"
    pdir.mkdir(exist_ok=True)
    prov = _provenance(cfg, checkpoint=ckpt)
    for (method, eps), pert in built.items():
        save_perturbation(pdir / _pert_name(method, eps), pert, {**prov, "method": method}, vocab.hash())
    write_jsonl(out / "attack_report.jsonl", attack_report_records(report, prov))
    _print_table(report)


def _print_table(report):
    grid = report.eps_grid()
    print(f"clean accuracy {report.clean_accuracy:.4f}")
    print("method " + " ".join(f"{e:>7g}" for e in grid))
    for method, row in report.table().items():
        print(f"{method:<6} " + " ".join(f"{a:7.4f}" for a in row))


def cmd_ni(cfg, args):
    ckpt, vocab, params, _ = _load_model(cfg, args)
    if not args.perturbation:
        raise CliError("--perturbation is required")
    ppath = Path(args.perturbation)
    if not ppath.is_file():
        raise CliError(f"perturbation not found: {ppath}")
    pert, pheader = load_perturbation(ppath, params)
    k = args.k if args.k is not None else cfg["ni"].get("k", 5)
    report = ni_vocab(params.embeddings, pert, k, vocab.special_ids)
    report.metadata.update({"eps": pert.eps, "kind": pert.kind, "p": pheader["p"], "provenance": pert.provenance})
    out = _out_dir(cfg)
    prov = _provenance(cfg, checkpoint=ckpt, perturbation=ppath)
    path = out / f"ni_{ppath.stem}.jsonl"
    write_jsonl(path, ni_report_records(report, vocab, prov))
    print(f"NI(V) k={k}: {report.aggregate:.6f} -> {path}")


def _parse_ratios(text):
    try:
        ratios = [float(r) for r in text.split(",") if r.strip()]
    except ValueError:
        raise CliError(f"bad --ratios value {text!r}") from None
    if not ratios or any(not 0 < r <= 1 for r in ratios):
        raise CliError("ratios must lie in (0, 1]")
    return ratios


def cmd_data_ratio(cfg, args):
    ckpt, vocab, params, header = _load_model(cfg, args)
    _, labels, train, evals = _load_train(cfg, vocab)
    test, _ = _load_test(cfg, vocab, header["meta"].get("labels", labels))
    dr = dict(cfg["data_ratio"])
    ratios = _parse_ratios(args.ratios) if args.ratios else [float(r) for r in dr.pop("ratios")]
    dr.pop("ratios", None)
    eps = float(dr.pop("eps"))
    pcfg = _perturb_config(cfg, **dr, eps=eps)
    seed = cell_seed(cfg["seed"], "Ours", eps)
    report = AttackReport(evaluate_accuracy(params, test), len(test),
                          metadata={"eps": eps, "optimizer": pcfg.optimizer, "momentum": pcfg.momentum,
                                    "normalize_gradients": pcfg.normalize_gradients})
    records = []
    for ratio in ratios:
        part = subsample(train, ratio, cfg["seed"])
        pert = train_perturbation(params, part, evals, pcfg.replace(seed=seed))
        acc = evaluate_accuracy(params, test, pert)
        records.append({"record": "ratio", "ratio": ratio, "n_train": len(part), "eps": eps,
                        "accuracy": acc, "n_test": len(test), "seed": seed})
        print(f"ratio {ratio:.2f} (n={len(part)}): accuracy under attack {acc:.4f}")
    prov = _provenance(cfg, checkpoint=ckpt)
    head = {"record": "header", "type": "data-ratio", **prov, "metadata": report.metadata}
    clean = {"record": "clean", "accuracy": report.clean_accuracy, "n_test": report.n_test}
    write_jsonl(_out_dir(cfg) / "data_ratio_report.jsonl", [head, clean] + records)


def cmd_generate_samples(cfg, args):
    ckpt, vocab, params, header = _load_model(cfg, args)
    if not args.perturbation:
        raise CliError("--perturbation is required")
    ppath = Path(args.perturbation)
    if not ppath.is_file():
        raise CliError(f"perturbation not found: {ppath}")
    pert, _ = load_perturbation(ppath, params)
    labels = header["meta"].get("labels", [])
    examples, raw = _load_test(cfg, vocab, labels, args.dataset)
    table = build_substitution_table(params.embeddings, pert, vocab.special_ids)
    prov = _provenance(cfg, checkpoint=ckpt, perturbation=ppath)
    records = [{"record": "header", "type": "generate-samples", **prov, "eps": pert.eps, "kind": pert.kind}]
    skipped = flipped = 0
    for ex in examples:
        try:
            s = generate_adversarial(ex, table, params)
        except GenerationSkipped:
            skipped += 1
            continue
        names = raw.label_names
        flipped += s.flipped
        records.append({
            "record": "sample",
            "original": " ".join(vocab.decode(s.original)),
            "adversarial": " ".join(vocab.decode(s.adversarial)),
            "position": s.position,
            "replaced": vocab.token_of(s.original_token),
            "replacement": vocab.token_of(s.new_token),
            "label": names[s.label],
            "clean_prediction": names[s.clean_prediction] if s.clean_prediction < len(names) else s.clean_prediction,
            "adversarial_prediction": (names[s.adversarial_prediction]
                                       if s.adversarial_prediction < len(names) else s.adversarial_prediction),
            "flipped": s.flipped,
        })
    rate = attack_success_rate(examples, table, params) if examples else 0.0
    records.append({"record": "summary", "n_samples": len(records) - 1, "n_skipped": skipped,
                    "n_flipped": flipped, "attack_success_rate": rate})
    path = _out_dir(cfg) / "adversarial_samples.jsonl"
    write_jsonl(path, records)
    print(f"{len(records) - 2} samples, {flipped} flipped -> {path}")


COMMANDS = {
    "train-classifier": cmd_train_classifier,
    "attack": cmd_attack,
    "ni": cmd_ni,
    "data-ratio": cmd_data_ratio,
    "generate-samples": cmd_generate_samples,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="tokenuap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    parsers = {}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("-v", "--verbose", action="store_true")
        parsers[name] = p
    for name in ("attack", "ni", "data-ratio", "generate-samples"):
        parsers[name].add_argument("--checkpoint", help=f"classifier checkpoint (default OUT/{CHECKPOINT})")
        parsers[name].add_argument("--vocab", help=f"vocabulary file (default: {VOCAB} next to the checkpoint)")
    for name in ("ni", "generate-samples"):
        parsers[name].add_argument("--perturbation", help="perturbation file written by 'attack'")
    parsers["ni"].add_argument("--k", type=int, default=None, help="neighbours per token (default 5)")
    parsers["data-ratio"].add_argument("--ratios", help="comma-separated fractions, e.g. 0.1,0.5,1.0")
    parsers["generate-samples"].add_argument("--dataset", help="TSV to attack (default: config data.test)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out)
        COMMANDS[args.command](cfg, args)
    except (CliError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"tokenuap {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
