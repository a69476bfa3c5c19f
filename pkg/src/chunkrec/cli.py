"""Command-line surface: train, decode, stream-demo, eval-cer, gradcheck,
oracle-check, latency.

The --config file is JSON with optional sections "model", "train", "beam"
and "synthetic"; geometry (W, B, left_context) lives inside "model".
Failures exit nonzero after printing a machine-readable JSON error record
to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .chunking import chunk_latency_ms, effective_latency_ms
from .decoding import BeamConfig, beam_decode, edit_distance, greedy_decode, stream_decode
from .errors import ChunkrecError, ConfigError
from .lattice import diagonal_identity_check, backward_pass, enumerate_paths, forward_pass
from .model import ChunkTransducerModel, ModelConfig, Vocabulary
from .training import (Adam, SyntheticTaskSpec, TrainConfig, gen_synthetic,
                       load_manifest, train)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def _model_from_config(cfg_dict, seed=None):
    mc = dict(cfg_dict.get("model", {}))
    if seed is not None:
        mc["seed"] = seed
    cfg = ModelConfig(**mc)
    units = cfg_dict.get("vocab_units")
    if units is None:
        units = [f"s{i}" for i in range(cfg.vocab_size - 2)]
    vocab = Vocabulary.from_units(units)
    return ChunkTransducerModel(cfg, vocab)


def _beam_config(cfg_dict):
    return BeamConfig(**cfg_dict.get("beam", {}))


def _data_from_args(args, cfg_dict, model, n=None, seed=None):
    if args.manifest:
        return load_manifest(args.manifest, model.vocab)
    syn = dict(cfg_dict.get("synthetic", {}))
    syn.setdefault("vocab_size", model.cfg.vocab_size)
    syn.setdefault("d_in", model.cfg.d_in)
    spec = SyntheticTaskSpec(**syn)
    return gen_synthetic(spec, n if n is not None else 64, seed=seed)


def _out_stream(args):
    if args.out:
        return open(args.out, "w", encoding="utf-8")
    import contextlib
    return contextlib.nullcontext(sys.stdout)


def cmd_train(args):
    cfg_dict = _load_config(args.config)
    model = _model_from_config(cfg_dict, seed=args.seed)
    tc = TrainConfig(**cfg_dict.get("train", {}))
    if args.checkpoint:
        tc.checkpoint_path = args.checkpoint
    data = _data_from_args(args, cfg_dict, model,
                           n=cfg_dict.get("n_train", 2000), seed=model.cfg.seed + 101)
    eval_data = None
    if not args.manifest:
        eval_data = _data_from_args(args, cfg_dict, model, n=32, seed=model.cfg.seed + 202)
    train(model, data, tc, eval_data=eval_data, log=lambda m: print(m, flush=True))
    if tc.checkpoint_path:
        print(f"checkpoint written to {tc.checkpoint_path}")
    return 0


def _load_model(args, cfg_dict):
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        return model
    return _model_from_config(cfg_dict, seed=args.seed)


def cmd_decode(args):
    cfg_dict = _load_config(args.config)
    model = _load_model(args, cfg_dict)
    beam = _beam_config(cfg_dict)
    data = _data_from_args(args, cfg_dict, model, n=cfg_dict.get("n_decode", 16),
                           seed=model.cfg.seed + 303)
    with _out_stream(args) as out:
        for x, _y in data:
            nbest = beam_decode(model, x, beam)
            ids, lp = nbest[0]
            out.write(f"{model.vocab.decode(ids)}\t{lp:.6f}\n")
    return 0


def cmd_stream_demo(args):
    cfg_dict = _load_config(args.config)
    model = _load_model(args, cfg_dict)
    beam = _beam_config(cfg_dict)
    data = _data_from_args(args, cfg_dict, model, n=1, seed=model.cfg.seed + 404)
    x, _y = data[0]
    frag_len = int(cfg_dict.get("fragment_frames", 5))
    frags = [x[i:i + frag_len] for i in range(0, len(x), frag_len)]
    ids, lp, emissions = stream_decode(model, frags, beam)
    with _out_stream(args) as out:
        for e in emissions:
            out.write(e.as_line(model.vocab) + "\n")
        out.write(f"# final\t{model.vocab.decode(ids)}\t{lp:.6f}\n")
    return 0


def cmd_eval_cer(args):
    cfg_dict = _load_config(args.config)
    model = _load_model(args, cfg_dict)
    beam = _beam_config(cfg_dict)
    data = _data_from_args(args, cfg_dict, model, n=cfg_dict.get("n_eval", 64),
                           seed=model.cfg.seed + 505)
    errs = refs = 0
    for x, y in data:
        nbest = beam_decode(model, x, beam)
        errs += edit_distance(nbest[0][0], y)
        refs += len(y)
    result = {"utterances": len(data), "cer": errs / max(refs, 1)}
    with _out_stream(args) as out:
        out.write(json.dumps(result) + "\n")
    return 0


def cmd_gradcheck(args):
    cfg = ModelConfig(d_model=16, n_heads=2, n_enc_blocks=1, n_dec_blocks=1, d_in=4,
                      left_context=4, W=3, B=1, vocab_size=8, ffn_inner=16,
                      seed=args.seed or 0)
    vocab = Vocabulary.from_units([f"s{i}" for i in range(cfg.vocab_size - 2)])
    model = ChunkTransducerModel(cfg, vocab)
    rng = np.random.default_rng(cfg.seed)
    x = rng.normal(size=(24, cfg.d_in))
    y = [2, 5]
    tensors = [model.params[n] for n in sorted(model.params)]
    ok, dev = ad.check_gradients(lambda: model.sequence_nll(x, y), tensors, tol=1e-4)
    print(f"{'PASS' if ok else 'FAIL'} end-to-end gradients, max deviation {dev:.3e}")
    return 0 if ok else 1


def cmd_oracle_check(args):
    rng = np.random.default_rng(args.seed or 0)
    max_dev = 0.0
    max_diag = 0.0
    for M in range(1, 6):
        for U in range(0, 6):
            for _ in range(20):
                blank = np.log(rng.uniform(0.05, 1.0, size=(M, U + 1)))
                label = np.log(rng.uniform(0.05, 1.0, size=(M, U)))
                alpha, lp = forward_pass(blank, label)
                ref = enumerate_paths(blank, label)
                max_dev = max(max_dev, abs(np.exp(lp) - np.exp(ref)) / np.exp(ref))
                beta = backward_pass(blank, label)
                max_diag = max(max_diag, diagonal_identity_check(alpha, beta, lp))
    ok = max_dev <= 1e-10 and max_diag <= 1e-9
    print(f"{'PASS' if ok else 'FAIL'} forward vs enumeration, max relative deviation {max_dev:.3e}")
    print(f"{'PASS' if ok else 'FAIL'} diagonal identity, max deviation {max_diag:.3e}")
    return 0 if ok else 1


def cmd_latency(args):
    cfg_dict = _load_config(args.config)
    mc = cfg_dict.get("model", {})
    W = mc.get("W", 10)
    B = mc.get("B", 3)
    with _out_stream(args) as out:
        out.write(f"chunk latency: {chunk_latency_ms(W):.0f} ms\n")
        out.write(f"effective latency (overlap {B}): {effective_latency_ms(W, B):.0f} ms\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="chunkrec",
                                description="streaming chunk-transducer toolkit")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", help="checkpoint path (input or output)")
    p.add_argument("--manifest", help="tab-separated (features, transcript) manifest")
    p.add_argument("--out", help="output file (default stdout)")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in [("train", cmd_train), ("decode", cmd_decode),
                     ("stream-demo", cmd_stream_demo), ("eval-cer", cmd_eval_cer),
                     ("gradcheck", cmd_gradcheck), ("oracle-check", cmd_oracle_check),
                     ("latency", cmd_latency)]:
        sp = sub.add_parser(name)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChunkrecError as e:
        sys.stderr.write(json.dumps({"error": e.category, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
