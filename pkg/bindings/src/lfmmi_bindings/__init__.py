"""Session-style bindings over the lfmmi toolkit for interactive use.

A session owns the loaded lexicon, phone LM, topology, denominator graph
and decode configuration. Every operation takes and returns plain data
(strings, floats, lists, dicts), so results can cross any scripting or
serialization boundary unchanged, and outputs match the `lfmmi` CLI for
identical inputs.

    >>> session = open_session("corpus/lexicon.txt", "graphs/phone_lm.json")
    >>> score(session, "corpus/emissions/utt0000.mat", "ba edd")
    >>> hyps = decode(session, "corpus/emissions/utt0000.mat", mode="aed")
    >>> rescore(session, hyps, lam=0.8)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

from lfmmi.base_scorers import CtcPrefixScorer, joint_table_from_token_emissions
from lfmmi.decoding import (
    DecodeConfig,
    NBestEntry,
    NBestList,
    aed_beam_search,
    nt_alsd_beam_search,
    rescore_nbest,
)
from lfmmi.emissions import Emissions, load_emissions
from lfmmi.errors import ParseError, ToolkitError
from lfmmi.fsa import Fsa
from lfmmi.graphs import TopologyConfig, compile_denominator, compile_numerator
from lfmmi.lexicon import Lexicon, load_lexicon, load_symbol_table
from lfmmi.lm import load_phone_lm
from lfmmi.scorer import mmi_log_posterior, precompute_denominator

__version__ = "0.1.0"

__all__ = ["SessionHandle", "open_session", "score", "decode", "rescore", "close_session"]

_session_counter = itertools.count(1)


class SessionClosedError(ToolkitError):
    code = "session-closed"


@dataclass
class SessionHandle:
    """Opaque owner of the loaded language resources; use the module
    functions rather than touching fields."""

    session_id: int
    lexicon: Lexicon
    topology: TopologyConfig
    denominator: Fsa
    config: DecodeConfig
    closed: bool = False

    def _check_open(self):
        if self.closed:
            raise SessionClosedError(
                f"session {self.session_id} is closed; open a new one"
            )


_CONFIG_KEYS = {
    "beam",
    "mmi_prefix_weight",
    "mmi_align_weight",
    "rescore_weight",
    "lm_weight",
    "max_output_per_frame",
    "mmi_floor",
    "length_normalize",
    "lookahead",
    "word_sep",
    "max_len",
}


def open_session(
    lexicon_path: Union[str, Path],
    lm_path: Union[str, Path],
    config: Optional[Dict] = None,
) -> SessionHandle:
    """Load a lexicon and phone LM and precompile the denominator graph.

    ``config`` may carry any DecodeConfig field plus ``phones`` (path of
    the phone symbol table; defaults to ``phones.txt`` next to the
    lexicon).
    """
    config = dict(config or {})
    phones_path = config.pop("phones", None)
    if phones_path is None:
        phones_path = Path(lexicon_path).parent / "phones.txt"
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ParseError(f"unknown config keys: {sorted(unknown)}")
    table = load_symbol_table(phones_path)
    lexicon = load_lexicon(lexicon_path, table)
    lm = load_phone_lm(lm_path)
    topo = TopologyConfig()
    return SessionHandle(
        session_id=next(_session_counter),
        lexicon=lexicon,
        topology=topo,
        denominator=compile_denominator(lm, topo, table),
        config=DecodeConfig(**config),
    )


def close_session(handle: SessionHandle) -> None:
    handle.closed = True


def score(
    handle: SessionHandle,
    emissions_path: Union[str, Path],
    transcript: Union[str, Sequence[str]],
) -> float:
    """MMI log-posterior of a transcript given phone emissions."""
    handle._check_open()
    tokens = transcript.split() if isinstance(transcript, str) else list(transcript)
    e = load_emissions(emissions_path)
    den = precompute_denominator(e, handle.denominator)
    g_num = compile_numerator(tokens, handle.lexicon, handle.topology)
    return float(mmi_log_posterior(e, g_num, den))


def _entry_to_plain(h: NBestEntry) -> Dict:
    out = {
        "tokens": list(h.tokens),
        "fused": float(h.fused),
        "base": float(h.base),
        "mmi": float(h.mmi),
        "lm": float(h.lm),
    }
    for flag in h.flags:
        out[flag] = True
    return out


def _token_emissions(emissions_path: Path, lexicon: Lexicon) -> Emissions:
    tok_path = emissions_path.with_suffix(".tok.mat")
    if not tok_path.exists():
        raise ParseError(f"token emissions not found next to {emissions_path}: {tok_path}")
    e = load_emissions(tok_path)
    if e.alphabet_size != len(lexicon.words) + 2:
        raise ParseError(
            f"token emissions width {e.alphabet_size} does not match vocabulary"
        )
    return Emissions(e.logp, symbols=("<eps>", "<blk>") + lexicon.words)


def decode(
    handle: SessionHandle,
    emissions_path: Union[str, Path],
    mode: str = "aed",
) -> Dict:
    """Beam-search decode one utterance; returns plain hypothesis data.

    ``emissions_path`` is the phone matrix ``<utt>.mat``; the token
    matrix is read from the sibling ``<utt>.tok.mat`` as laid out by the
    corpus generator. The result dict carries the emissions path so it
    can be fed straight to :func:`rescore`.
    """
    handle._check_open()
    if mode not in ("aed", "nt"):
        raise ParseError(f"unknown decode mode: {mode!r}")
    emissions_path = Path(emissions_path)
    e_phones = load_emissions(emissions_path)
    lex, topo, cfg = handle.lexicon, handle.topology, handle.config
    e_tok = _token_emissions(emissions_path, lex)
    if mode == "aed":
        base = CtcPrefixScorer(e_tok, lex.words)
        nb = aed_beam_search(
            e_tok, e_phones, base, None, lex, topo, handle.denominator, cfg,
            utt_id=emissions_path.stem,
        )
    else:
        joint = joint_table_from_token_emissions(e_tok, lex.words)
        nb = nt_alsd_beam_search(
            e_phones, joint, lex, topo, handle.denominator, cfg, utt_id=emissions_path.stem
        )
    return {
        "id": nb.utt_id,
        "emissions": str(emissions_path),
        "hyps": [_entry_to_plain(h) for h in nb.entries],
    }


def rescore(handle: SessionHandle, nbest: Dict, lam: Optional[float] = None) -> Dict:
    """Re-rank decode output by interpolating base and numerator scores.

    ``nbest`` is the plain dict returned by :func:`decode` (or parsed
    from the CLI's JSONL plus an ``emissions`` path).
    """
    handle._check_open()
    try:
        emissions_path = nbest["emissions"]
        entries = tuple(
            NBestEntry(
                tokens=tuple(h["tokens"]),
                fused=float(h["fused"]),
                base=float(h["base"]),
                mmi=float(h["mmi"]),
                lm=float(h.get("lm", 0.0)),
                flags=tuple(k for k in ("unfinished", "unalignable") if h.get(k)),
            )
            for h in nbest["hyps"]
        )
        nb = NBestList(utt_id=str(nbest["id"]), entries=entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad n-best input: {exc}") from None
    e_phones = load_emissions(emissions_path)
    out = rescore_nbest(
        nb, e_phones, handle.lexicon, handle.topology, handle.config, lam=lam
    )
    return {
        "id": out.utt_id,
        "emissions": str(emissions_path),
        "hyps": [_entry_to_plain(h) for h in out.entries],
    }
