"""Command-line surface: corpus generation, graph compilation, scoring,
gradient checks, decoding, rescoring, and evaluation.

Every command writes a manifest next to its primary output recording the
resolved arguments and seed; `rerun --manifest` replays it and reproduces
the outputs byte for byte. Machine-readable results go to stdout or
``--out``; diagnostics go to stderr. Failures exit non-zero with a single
``ERR:<code>: <detail>`` line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import replace
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .base_scorers import CtcPrefixScorer, TokenNgramScorer, joint_table_from_token_emissions, load_joint_table
from .corpus import (
    CorpusSpec,
    evaluate_error_rate,
    generate_corpus,
    read_refs,
    read_transcripts,
    synthesize_emissions,
    write_corpus_dir,
)
from .decoding import (
    DecodeConfig,
    NBestList,
    aed_beam_search,
    nbest_to_json,
    nt_alsd_beam_search,
    read_nbest_jsonl,
    rescore_nbest,
)
from .emissions import load_emissions
from .errors import ParseError, ToolkitError
from .fsa import Fsa, load_fsa, save_fsa
from .graphs import TopologyConfig, compile_denominator, compile_numerator
from .lexicon import load_lexicon, load_symbol_table
from .lm import estimate_phone_bigram, load_phone_lm, save_phone_lm
from .scorer import lfmmi_loss_and_grad, mmi_log_posterior, precompute_denominator


def _err(exc: ToolkitError) -> int:
    print(f"ERR:{exc.code}: {exc}", file=sys.stderr)
    return 1


def _diag(msg: str) -> None:
    print(msg, file=sys.stderr)


def write_manifest(
    out_path: Path, command: str, args: Dict, seed: Optional[int], resolved: Optional[Dict] = None
) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "args": args,
    }
    if resolved:
        manifest["resolved"] = resolved
    path = Path(str(out_path) + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    spec = CorpusSpec(
        num_words=args.num_words,
        phones_per_word=(args.phones_per_word[0], args.phones_per_word[1]),
        utt_len=(args.utt_len[0], args.utt_len[1]),
        num_utterances=args.num_utterances + args.train_utterances,
        tau=args.tau,
        confusion_overlap=args.overlap,
        num_phones=args.num_phones,
        seed=args.seed,
    )
    lex, transcripts = generate_corpus(spec)
    train = transcripts[: args.train_utterances]
    test = transcripts[args.train_utterances :]
    topo = TopologyConfig()
    utts = []
    for i, tokens in enumerate(test):
        utt_id = f"utt{i:04d}"
        utts.append(
            (utt_id, synthesize_emissions(tokens, lex, topo, args.tau, seed=args.seed * 100003 + i))
        )
    out = Path(args.out)
    write_corpus_dir(out, lex, train, utts)
    write_manifest(
        out / "corpus", "gen", _argdict(args), args.seed,
        resolved={"corpus_spec": dataclasses.asdict(spec)},
    )
    _diag(f"wrote corpus with {len(train)} train / {len(test)} test utterances to {out}")
    return 0


# ---------------------------------------------------------------- compile


def _load_lang(args):
    table = load_symbol_table(args.phones)
    lex = load_lexicon(args.lexicon, table)
    if args.phone_lm:
        lm = load_phone_lm(args.phone_lm)
    elif args.transcripts:
        lm = estimate_phone_bigram(read_transcripts(args.transcripts), lex, k=args.smoothing)
    elif getattr(args, "denominator", None):
        lm = None  # precompiled graph carries the LM weights already
    else:
        raise ParseError("need --phone-lm, --transcripts, or --denominator")
    return table, lex, lm


def cmd_compile(args) -> int:
    table, lex, lm = _load_lang(args)
    topo = TopologyConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g_den = compile_denominator(lm, topo, table)
    save_fsa(g_den, out / "denominator.fsa")
    save_phone_lm(lm, out / "phone_lm.json")
    n_num = 0
    if args.refs:
        for utt_id, tokens in read_refs(args.refs):
            save_fsa(compile_numerator(tokens, lex, topo), out / f"num_{utt_id}.fsa")
            n_num += 1
    write_manifest(out / "graphs", "compile", _argdict(args), args.seed)
    _diag(f"wrote denominator ({g_den.num_states} states) and {n_num} numerator graphs")
    return 0


# ---------------------------------------------------------------- score


def _denominator_graph(args, table, lm) -> "Fsa":
    if getattr(args, "denominator", None):
        return load_fsa(args.denominator, num_labels=len(table))
    return compile_denominator(lm, TopologyConfig(), table)


def cmd_score(args) -> int:
    table, lex, lm = _load_lang(args)
    topo = TopologyConfig()
    g_den = _denominator_graph(args, table, lm)
    refs = read_refs(args.refs)
    emissions_dir = Path(args.emissions_dir)

    def one(item):
        utt_id, tokens = item
        e = load_emissions(emissions_dir / f"{utt_id}.mat")
        den = precompute_denominator(e, g_den)
        g_num = compile_numerator(tokens, lex, topo)
        return utt_id, mmi_log_posterior(e, g_num, den)

    results = _map(one, refs, args.jobs)
    text = "".join(f"{utt_id} {score!r}\n" for utt_id, score in results)
    _emit(text, args.out)
    if args.out:
        write_manifest(Path(args.out), "score", _argdict(args), args.seed)
    return 0


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from .corpus import generate_corpus as gen

    worst = 0.0
    reports = []
    for i in range(args.instances):
        seed = args.seed + i
        spec = CorpusSpec(
            num_words=3, phones_per_word=(1, 2), utt_len=(1, 2),
            num_utterances=1, tau=0.8, num_phones=3, seed=seed,
        )
        lex, transcripts = gen(spec)
        topo = TopologyConfig()
        utt = synthesize_emissions(transcripts[0], lex, topo, tau=0.8, seed=seed)
        lm = estimate_phone_bigram(transcripts, lex, k=1.0)
        g_den = compile_denominator(lm, topo, lex.phone_table)
        g_num = compile_numerator(transcripts[0], lex, topo)
        e = utt.phone_emissions
        loss, grad = lfmmi_loss_and_grad(e, g_num, g_den)
        rel = float(_fd_worst_error(e, g_num, g_den, grad, step=args.step))
        worst = max(worst, rel)
        reports.append({"seed": seed, "loss": float(loss), "max_rel_err": rel})
    ok = bool(worst < args.tolerance)
    out = {
        "instances": args.instances,
        "step": args.step,
        "tolerance": args.tolerance,
        "max_rel_err": worst,
        "pass": ok,
        "reports": reports,
    }
    _emit(json.dumps(out, indent=1) + "\n", args.out)
    if args.out:
        write_manifest(Path(args.out), "gradcheck", _argdict(args), args.seed)
    return 0 if ok else 1


def _fd_worst_error(e, g_num, g_den, grad, step=1e-5) -> float:
    worst = 0.0
    logp = e.logp
    for t in range(e.num_frames):
        for v in range(1, e.alphabet_size):
            up, down = logp.copy(), logp.copy()
            up[t, v] += step
            down[t, v] -= step
            lu = lfmmi_loss_and_grad(_renorm(up), g_num, g_den)[0]
            ld = lfmmi_loss_and_grad(_renorm(down), g_num, g_den)[0]
            fd = (lu - ld) / (2 * step)
            scale = max(abs(fd), abs(grad[t, v]), 1e-8)
            worst = max(worst, abs(fd - grad[t, v]) / scale)
    return worst


def _renorm(logits):
    from .emissions import Emissions

    m = np.max(logits, axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return Emissions(logits - lse[:, None])


# ---------------------------------------------------------------- decode


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(
        beam=args.beam,
        mmi_prefix_weight=args.mmi_prefix_weight,
        mmi_align_weight=args.mmi_align_weight,
        rescore_weight=args.rescore_weight,
        lm_weight=args.lm_weight,
        max_output_per_frame=args.max_output_per_frame,
        lookahead=args.lookahead,
    )


def cmd_decode(args) -> int:
    table, lex, lm_model = _load_lang(args)
    topo = TopologyConfig()
    g_den = _denominator_graph(args, table, lm_model)
    cfg = _decode_config(args)
    refs = read_refs(args.refs)
    emissions_dir = Path(args.emissions_dir)
    token_lm = None
    if args.lm_weight != 0.0:
        if not args.lm_train:
            raise ParseError("--lm-weight needs --lm-train transcripts")
        corpus = read_transcripts(args.lm_train)
        if args.lookahead:
            corpus = [_char_tokens(t, cfg.word_sep) for t in corpus]
        token_lm = TokenNgramScorer(corpus, order=args.lm_order, vocab=None)
    char_base = None
    if args.mode == "aed" and args.lookahead:
        train_path = args.lm_train or args.transcripts
        if not train_path:
            raise ParseError("--lookahead needs --lm-train or --transcripts for the character base")
        chars = sorted({ch for w in lex.words for ch in w}) + [cfg.word_sep]
        char_base = TokenNgramScorer(
            [_char_tokens(t, cfg.word_sep) for t in read_transcripts(train_path)],
            order=args.lm_order,
            vocab=chars,
        )

    def one(item):
        utt_id, _tokens = item
        e_phones = load_emissions(emissions_dir / f"{utt_id}.mat")
        if args.mode == "aed":
            if args.lookahead:
                nb = aed_beam_search(
                    None, e_phones, char_base, token_lm, lex, topo, g_den, cfg, utt_id=utt_id
                )
                nb = _words_from_chars(nb, cfg.word_sep)
            else:
                e_tok = _reindex(load_emissions(emissions_dir / f"{utt_id}.tok.mat"), lex)
                base = CtcPrefixScorer(e_tok, lex.words)
                nb = aed_beam_search(
                    e_tok, e_phones, base, token_lm, lex, topo, g_den, cfg, utt_id=utt_id
                )
        else:
            joint_path = Path(args.joint_dir) / f"{utt_id}.joint" if args.joint_dir else None
            if joint_path and joint_path.exists():
                joint = load_joint_table(joint_path, lex.words)
            else:
                e_tok = _reindex(load_emissions(emissions_dir / f"{utt_id}.tok.mat"), lex)
                joint = joint_table_from_token_emissions(e_tok, lex.words)
            nb = nt_alsd_beam_search(e_phones, joint, lex, topo, g_den, cfg, utt_id=utt_id)
        return nbest_to_json(nb)

    lines = _map(one, refs, args.jobs)
    _emit("".join(line + "\n" for line in lines), args.out)
    if args.out:
        write_manifest(
            Path(args.out), "decode", _argdict(args), args.seed,
            resolved={"decode_config": dataclasses.asdict(cfg)},
        )
    return 0


def _char_tokens(tokens: Sequence[str], sep: str) -> List[str]:
    out: List[str] = []
    for i, w in enumerate(tokens):
        if i:
            out.append(sep)
        out.extend(w)
    return out


def _words_from_chars(nb: NBestList, sep: str) -> NBestList:
    entries = tuple(
        replace(h, tokens=tuple(w for w in "".join(h.tokens).split(sep) if w))
        for h in nb.entries
    )
    return replace(nb, entries=entries)


def _reindex(e_tok_raw, lex):
    """Token emission files carry per-utterance symbol tables only when
    produced in-process; files written by `gen` already use the full
    vocabulary order, so just attach the symbols."""
    from .emissions import Emissions

    if e_tok_raw.alphabet_size != len(lex.words) + 2:
        raise ParseError(
            f"token emissions width {e_tok_raw.alphabet_size} does not match "
            f"vocabulary of {len(lex.words)} words"
        )
    return Emissions(e_tok_raw.logp, symbols=("<eps>", "<blk>") + lex.words)


# ---------------------------------------------------------------- rescore


def cmd_rescore(args) -> int:
    table = load_symbol_table(args.phones)
    lex = load_lexicon(args.lexicon, table)
    topo = TopologyConfig()
    cfg = DecodeConfig(rescore_weight=args.rescore_weight)
    lam = args.rescore_lambda if args.rescore_lambda is not None else cfg.rescore_lambda
    nbests = read_nbest_jsonl(args.nbest)
    emissions_dir = Path(args.emissions_dir)

    def one(nb: NBestList):
        e_phones = load_emissions(emissions_dir / f"{nb.utt_id}.mat")
        return nbest_to_json(rescore_nbest(nb, e_phones, lex, topo, cfg, lam=lam))

    lines = _map(one, nbests, args.jobs)
    _emit("".join(line + "\n" for line in lines), args.out)
    if args.out:
        write_manifest(Path(args.out), "rescore", _argdict(args), args.seed)
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    refs = dict((u, t) for u, t in read_refs(args.refs))
    hyps = []
    ref_list = []
    for nb in read_nbest_jsonl(args.hyps):
        if nb.utt_id not in refs:
            raise ParseError(f"hypothesis for unknown utterance {nb.utt_id!r}")
        hyps.append(list(nb.entries[0].tokens) if nb.entries else [])
        ref_list.append(refs[nb.utt_id])
    report = evaluate_error_rate(hyps, ref_list)
    out = {
        "utterances": len(hyps),
        "ref_tokens": report.ref_tokens,
        "substitutions": report.substitutions,
        "insertions": report.insertions,
        "deletions": report.deletions,
        "token_error_rate": report.token_error_rate,
    }
    _emit(json.dumps(out, indent=1) + "\n", args.out)
    if args.out:
        write_manifest(Path(args.out), "eval", _argdict(args), args.seed)
    return 0


# ---------------------------------------------------------------- rerun


def cmd_rerun(args) -> int:
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    argv = [manifest["command"]]
    for key, val in manifest["args"].items():
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif isinstance(val, list):
            argv.append(flag)
            argv.extend(str(v) for v in val)
        else:
            argv.extend([flag, str(val)])
    return main(argv)


# ---------------------------------------------------------------- plumbing


_WORKER_FN = None


def _call_worker(item):
    return _WORKER_FN(item)


def _map(fn, items, jobs: int):
    """Order-preserving map, optionally across forked workers.

    The worker closure is installed in a module global before the fork so
    children inherit it; results come back in input order regardless of
    completion order.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    global _WORKER_FN
    _WORKER_FN = fn
    try:
        with Pool(jobs) as pool:
            return pool.map(_call_worker, items)
    finally:
        _WORKER_FN = None


def _argdict(args) -> Dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _add_lang_flags(p, need_lm=True):
    p.add_argument("--lexicon", required=True, help="lexicon file: word phone1 phone2 ...")
    p.add_argument("--phones", required=True, help="phone symbol table: symbol id")
    if need_lm:
        p.add_argument("--phone-lm", help="phone bigram LM as JSON {context: {next: logp}}")
        p.add_argument("--transcripts", help="estimate the LM from these transcripts instead")
        p.add_argument("--smoothing", type=float, default=1.0, help="add-k smoothing constant")
        p.add_argument("--denominator", help="precompiled denominator graph (.fsa) to use as-is")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="utterance-level parallelism")
    p.add_argument("--out", help="write primary output here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfmmi", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus directory")
    p.add_argument("--num-words", type=int, default=6)
    p.add_argument("--phones-per-word", type=int, nargs=2, default=[2, 3], metavar=("MIN", "MAX"))
    p.add_argument("--utt-len", type=int, nargs=2, default=[2, 4], metavar=("MIN", "MAX"))
    p.add_argument("--num-utterances", type=int, default=20, help="test-set size")
    p.add_argument("--train-utterances", type=int, default=40)
    p.add_argument("--tau", type=float, default=0.4, help="emission noise temperature")
    p.add_argument("--overlap", type=int, default=0, help="shared leading phones between word pairs")
    p.add_argument("--num-phones", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compile", help="compile denominator (and numerator) graphs")
    _add_lang_flags(p)
    p.add_argument("--refs", help="also compile numerator graphs for these utterances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("score", help="per-utterance MMI log-posteriors of reference transcripts")
    _add_lang_flags(p)
    p.add_argument("--emissions-dir", required=True)
    p.add_argument("--refs", required=True, help="lines: utt-id token token ...")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference check of the training gradient")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("decode", help="beam-search decode to N-best JSONL")
    _add_lang_flags(p)
    p.add_argument("--mode", choices=["aed", "nt"], default="aed")
    p.add_argument("--emissions-dir", required=True)
    p.add_argument("--refs", required=True, help="defines utterance ids and order")
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--mmi-prefix-weight", type=float, default=0.3)
    p.add_argument("--mmi-align-weight", type=float, default=0.2)
    p.add_argument("--rescore-weight", type=float, default=0.2)
    p.add_argument("--lm-weight", type=float, default=0.0)
    p.add_argument("--lm-train", help="token transcripts for the fusion n-gram LM")
    p.add_argument("--lm-order", type=int, default=2)
    p.add_argument("--max-output-per-frame", type=int, default=3)
    p.add_argument("--lookahead", action="store_true", help="character search with word look-ahead")
    p.add_argument("--joint-dir", help="per-utterance transducer tables <utt>.joint")
    _add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rescore", help="re-rank N-best JSONL with numerator scores")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--nbest", required=True)
    p.add_argument("--emissions-dir", required=True)
    p.add_argument("--rescore-lambda", type=float, default=None, help="weight of the base posterior")
    p.add_argument("--rescore-weight", type=float, default=0.2, help="weight of the MMI term (1 - lambda)")
    _add_common(p)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("eval", help="token error rate of 1-best hypotheses")
    p.add_argument("--hyps", required=True, help="N-best JSONL")
    p.add_argument("--refs", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rerun", help="replay a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_rerun)

    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        return _err(exc)
    except FileNotFoundError as exc:
        return _err(ParseError(f"missing file: {exc.filename}"))


if __name__ == "__main__":
    sys.exit(main())
