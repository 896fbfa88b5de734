"""Command line front end: align, translate, evaluate.

Diagnostics go to standard error; results go to files or standard
output. Exit codes: 0 success, 2 usage error, 3 data error, 4
numerical error.
"""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from ._version import __version__
from .alignment import (
    CcaAligner,
    LeastSquaresAligner,
    ProcrustesAligner,
    load_map,
    save_map,
    select_rank,
)
from .dictionaries import (
    build_phrase_matrices,
    build_pseudo_dictionary,
    load_aligned_corpus,
    load_tsv_dictionary,
    resolve,
)
from .embeddings import load_word2vec_text, normalize_rows
from .errors import DataError, LexalignError
from .evaluation import (
    emit_report,
    evaluate_sentence_retrieval,
    evaluate_words,
    load_test_set,
    tsv_summary,
)
from .retrieval import RetrievalConfig, fit_beta, top_indices

logger = logging.getLogger("lexalign")

_METHOD_NAMES = {"nn": "nn", "softmax": "softmax", "isf": "inverted_softmax"}


def _add_retrieval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--method", choices=sorted(_METHOD_NAMES), default="nn",
        help="retrieval method: nn, softmax, or isf (inverted softmax)",
    )
    parser.add_argument("--beta", type=float, default=30.0,
                        help="inverse temperature for the softmax methods")
    parser.add_argument("--ns", type=int, default=1500,
                        help="source sample size for the inverted-softmax denominator")
    parser.add_argument("--seed", type=int, default=42,
                        help="seed from which all random streams derive")
    parser.add_argument("--beta-max", type=float, default=200.0,
                        help="upper bound when fitting beta")
    parser.add_argument("--global-sample", action="store_true",
                        help="share one denominator sample across queries")


def _add_embedding_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--src-emb", required=True, help="source embeddings, word2vec text")
    parser.add_argument("--tgt-emb", required=True, help="target embeddings, word2vec text")
    parser.add_argument("--limit", type=int, default=None,
                        help="keep only the most frequent N words per side")


def _config(args) -> RetrievalConfig:
    return RetrievalConfig(
        method=_METHOD_NAMES[args.method],
        beta=args.beta,
        n_s=args.ns,
        seed=args.seed,
        beta_max=args.beta_max,
        global_sample=args.global_sample,
    )


def _load_side(path: str, limit: int | None):
    return normalize_rows(load_word2vec_text(path, limit=limit))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexalign",
        description="Align two word embedding spaces and retrieve translations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="fit a map and write it to a file")
    _add_embedding_flags(p_align)
    group = p_align.add_mutually_exclusive_group(required=True)
    group.add_argument("--dict", dest="dictionary",
                       help="training dictionary TSV, or the literal 'pseudo' to pair "
                            "identically spelled words")
    group.add_argument("--corpus", nargs=2, metavar=("SRC", "TGT"),
                       help="line-aligned corpus files; pairs become phrase vectors")
    p_align.add_argument("--map", choices=("procrustes", "lsq", "cca"),
                         default="procrustes", help="map family to fit")
    p_align.add_argument("--rank", default=None,
                         help="retained rank: an integer, or 'auto' to pick by "
                              "training precision (procrustes only)")
    p_align.add_argument("--max-pairs", type=int, default=None,
                         help="cap on dictionary or corpus pairs")
    p_align.add_argument("--skip", type=int, default=0,
                         help="corpus pairs to skip before reading")
    _add_retrieval_flags(p_align)
    p_align.add_argument("--out", required=True, help="where to write the map artifact")
    p_align.set_defaults(func=cmd_align)

    p_translate = sub.add_parser("translate", help="print ranked translations for words")
    p_translate.add_argument("--map-file", required=True, help="map artifact from align")
    _add_embedding_flags(p_translate)
    _add_retrieval_flags(p_translate)
    p_translate.add_argument("--top-k", type=int, default=10,
                             help="candidates to print per word")
    p_translate.add_argument("--words-file", default=None,
                             help="file with one query word per line")
    p_translate.add_argument("words", nargs="*", help="query words")
    p_translate.set_defaults(func=cmd_translate)

    p_eval = sub.add_parser("evaluate", help="score precision@k and write a report")
    p_eval.add_argument("--map-file", required=True, help="map artifact from align")
    _add_embedding_flags(p_eval)
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--test-set", help="word test dictionary TSV")
    group.add_argument("--sentences", nargs=2, metavar=("SRC", "TGT"),
                       help="line-aligned held-out corpus for sentence retrieval")
    p_eval.add_argument("--max-pairs", type=int, default=None,
                        help="cap on held-out sentence pairs")
    p_eval.add_argument("--skip", type=int, default=0,
                        help="held-out sentence pairs to skip before reading")
    p_eval.add_argument("--n-queries", type=int, default=5000,
                        help="sampled queries for sentence retrieval")
    _add_retrieval_flags(p_eval)
    p_eval.add_argument("--fit-beta-dict", default=None,
                        help="fit beta on this training dictionary before evaluating")
    p_eval.add_argument("--ks", default="1,5,10",
                        help="comma-separated precision cutoffs")
    p_eval.add_argument("--jobs", type=int, default=1,
                        help="worker threads for evaluation")
    p_eval.add_argument("--report", default=None,
                        help="report path; prints to stdout when omitted")
    p_eval.add_argument("--tsv", default=None,
                        help="append a one-line summary row to this TSV file")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def cmd_align(args) -> int:
    src = _load_side(args.src_emb, args.limit)
    tgt = _load_side(args.tgt_emb, args.limit)
    if args.dictionary == "pseudo":
        dictionary = build_pseudo_dictionary(src.vocab, tgt.vocab, max_pairs=args.max_pairs)
        paired = resolve(dictionary, src, tgt)
        origin = "pseudo"
    elif args.dictionary is not None:
        dictionary = load_tsv_dictionary(args.dictionary)
        if args.max_pairs is not None:
            dictionary = replace(dictionary, pairs=dictionary.pairs[: args.max_pairs])
        paired = resolve(dictionary, src, tgt)
        origin = args.dictionary
    else:
        pool = load_aligned_corpus(
            args.corpus[0], args.corpus[1], max_pairs=args.max_pairs, skip=args.skip
        )
        paired = build_phrase_matrices(pool, src, tgt)
        origin = f"{args.corpus[0]},{args.corpus[1]}"
    logger.info("fitting %s map on %d pairs (%d dropped)",
                args.map, paired.n, paired.n_dropped)

    rank = args.rank
    if rank is not None and rank != "auto":
        try:
            rank = int(rank)
        except ValueError:
            raise ValueError(f"--rank must be an integer or 'auto', got {rank!r}") from None
    if rank is not None and args.map != "procrustes" and rank == "auto":
        raise ValueError("--rank auto is only available for --map procrustes")

    if args.map == "procrustes":
        aligner = ProcrustesAligner().fit(paired.x, paired.y)
        if rank == "auto":
            chosen = select_rank(aligner, paired.x, paired.y, _config(args),
                                 pairs=paired.pairs)
            logger.info("selected rank %d", chosen)
            aligner = aligner.with_rank(chosen)
        elif rank is not None:
            aligner = aligner.with_rank(rank)
        spectrum = aligner.sigma_
        logger.info("singular value spectrum: max %.6g min %.6g sum %.6g",
                    float(spectrum[0]), float(spectrum[-1]), float(spectrum.sum()))
    elif args.map == "lsq":
        if rank is not None:
            raise ValueError("--rank does not apply to --map lsq")
        aligner = LeastSquaresAligner().fit(paired.x, paired.y)
    else:
        aligner = CcaAligner(n_components=rank).fit(paired.x, paired.y)
        logger.info("canonical correlations: max %.6g min %.6g",
                    float(aligner.canonical_correlations_[0]),
                    float(aligner.canonical_correlations_[-1]))
    metadata = {
        "dictionary": origin,
        "pairs_kept": paired.n,
        "pairs_dropped": paired.n_dropped,
        "source_embeddings": args.src_emb,
        "target_embeddings": args.tgt_emb,
        "created_by": f"lexalign {__version__}",
    }
    save_map(args.out, aligner, metadata)
    logger.info("wrote map to %s", args.out)
    return 0


def cmd_translate(args) -> int:
    aligner, _ = load_map(args.map_file)
    src = _load_side(args.src_emb, args.limit)
    tgt = _load_side(args.tgt_emb, args.limit)
    config = _config(args)
    words = list(args.words)
    if args.words_file:
        try:
            with open(args.words_file, encoding="utf-8") as handle:
                words.extend(line.strip() for line in handle if line.strip())
        except OSError as exc:
            raise DataError(f"cannot read words from {args.words_file}: {exc}") from exc
    if not words:
        raise ValueError("no query words given")
    src_shared = aligner.transform(src.matrix)
    src_shared = src_shared / np.linalg.norm(src_shared, axis=1)[:, None]
    tgt_shared = aligner.transform_target(tgt.matrix)
    tgt_shared = tgt_shared / np.linalg.norm(tgt_shared, axis=1)[:, None]
    top_k = min(args.top_k, len(tgt))
    out = sys.stdout
    for word in words:
        row = src.vocab.rank(word)
        if row is None:
            out.write(f"{word}\tOOV\n")
            continue
        top = top_indices(row, src_shared, tgt_shared, config, top_k=top_k)
        sims = tgt_shared[top] @ src_shared[row]
        for position, (index, sim) in enumerate(zip(top, sims), start=1):
            out.write(f"{word}\t{position}\t{tgt.vocab.words[int(index)]}\t{sim:.6f}\n")
    return 0


def cmd_evaluate(args) -> int:
    aligner, _ = load_map(args.map_file)
    src = _load_side(args.src_emb, args.limit)
    tgt = _load_side(args.tgt_emb, args.limit)
    config = _config(args)
    try:
        ks = tuple(int(k) for k in args.ks.split(","))
    except ValueError:
        raise ValueError(f"--ks must be comma-separated integers, got {args.ks!r}") from None
    if args.fit_beta_dict:
        paired = resolve(load_tsv_dictionary(args.fit_beta_dict), src, tgt)
        fitted = fit_beta(aligner, paired.x, paired.y, config)
        logger.info("fitted beta %.6g (diverged=%s)", fitted.beta, fitted.diverged)
        config = replace(config, beta=fitted.beta)
    if args.test_set:
        test_set = load_test_set(args.test_set, src.vocab)
        report = evaluate_words(src, tgt, aligner, config, test_set,
                                ks=ks, n_jobs=args.jobs)
    else:
        pool = load_aligned_corpus(args.sentences[0], args.sentences[1],
                                   max_pairs=args.max_pairs, skip=args.skip)
        report = evaluate_sentence_retrieval(src, tgt, aligner, config, pool,
                                             n_queries=args.n_queries,
                                             ks=ks, n_jobs=args.jobs)
    if args.report:
        emit_report(report, args.report)
        logger.info("wrote report to %s", args.report)
    else:
        import json

        json.dump(report.to_dict(), sys.stdout, indent=2)
        sys.stdout.write("\n")
    if args.tsv:
        header, row = tsv_summary(report)
        try:
            with open(args.tsv, encoding="utf-8") as handle:
                exists = bool(handle.readline())
        except OSError:
            exists = False
        with open(args.tsv, "a", encoding="utf-8") as handle:
            if not exists:
                handle.write(header + "\n")
            handle.write(row + "\n")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: data: {_one_line(exc)}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except LexalignError as exc:
        print(f"error: numerical: {_one_line(exc)}", file=sys.stderr)
        return 4


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split())


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
