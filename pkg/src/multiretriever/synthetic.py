"""Synthetic environments with known answers for exercising the selectors.

``BanditEnvironment`` is a bare contextual bandit over feature vectors.
``venn_world`` builds a small retrieval benchmark in which each prompted
perspective is the only one that can solve a third of the tasks, run
through the real pipeline with the local embedder and a rule-based mock
generator.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import CodeSnippet, CompletionTask, TaskKind, snippet_id_for
from .embed import CallableGenerator, LocalEmbedder
from .generate import Pipeline, PromptConfig, Strategy, single, UNION, MAXSIM, LINUCB, LOGISTIC
from .retrievers import DEFAULT_PERSPECTIVES, PerspectiveId, RetrievalConfig, build_perspective_index
from .selection import LinUcbState, linucb_init, logistic_train, train_linucb

# --------------------------------------------------------------------------- bandit


@dataclass(frozen=True)
class BanditRound:
    task_id: str
    feats: np.ndarray
    best_arm: int
    flipped: bool


class BanditEnvironment:
    """Reward is 1 iff the chosen arm has the largest cosine, with label noise.

    Each round draws a cosine per arm uniformly from [0, 1]; the Jaccard
    feature tracks the cosine (``0.8 * cos`` plus small Gaussian noise,
    clipped to [0, 1]) as it does for real retrievals, where lexical overlap
    and embedding similarity move together. The observed reward is flipped
    with probability ``noise``.
    """

    def __init__(self, n_arms: int = 3, noise: float = 0.1, seed: int = 0) -> None:
        self.n_arms = n_arms
        self.noise = noise
        self.rng = np.random.default_rng(seed)

    def rounds(self, n: int) -> list[BanditRound]:
        out = []
        for i in range(n):
            cos = self.rng.uniform(0.0, 1.0, self.n_arms)
            jac = np.clip(0.8 * cos + self.rng.normal(0.0, 0.05, self.n_arms), 0.0, 1.0)
            out.append(BanditRound(f"round-{i}", np.column_stack([cos, jac]),
                                   int(np.argmax(cos)), bool(self.rng.uniform() < self.noise)))
        return out

    def arm_features(self, task: BanditRound) -> np.ndarray:
        return task.feats

    def arm_reward(self, task: BanditRound, arm: int) -> int:
        hit = int(arm == task.best_arm)
        return 1 - hit if task.flipped else hit


@dataclass
class BanditRun:
    state: LinUcbState
    optimal: list[bool]

    def accuracy_last(self, n: int) -> float:
        tail = self.optimal[-n:]
        return sum(tail) / len(tail)

    def regret(self, t: int) -> int:
        """Suboptimal picks among the first ``t`` rounds (expected regret / gap)."""
        return sum(not ok for ok in self.optimal[:t])


def run_bandit(n_rounds: int, seed: int, alpha: float = 0.1, n_arms: int = 3,
               noise: float = 0.1) -> BanditRun:
    """Play ``n_rounds`` online and record whether each pick was the optimal arm."""
    env = BanditEnvironment(n_arms, noise, seed)
    rounds = env.rounds(n_rounds)
    optimal: list[bool] = []
    # shuffling iid rounds changes nothing, but keep the visit order explicit
    state = train_linucb(linucb_init(n_arms, alpha=alpha), rounds, env, passes=1, shuffle_seed=seed,
                         on_step=lambda task, arm, _r: optimal.append(arm == task.best_arm))
    return BanditRun(state, optimal)


# --------------------------------------------------------------------------- venn world

SOLVERS = (PerspectiveId.LEXICAL, PerspectiveId.HYPO_LINE, PerspectiveId.SUMMARY)

_SUMMARY_PROMPT = "This code snippets of "
_ANSWER_IN_CONTEXT = re.compile(r"^// (value = [^;\n]*;)", re.M)
_INTENT = re.compile(r"use_intent\((\w+)\)")
_TOPIC = re.compile(r"use_topic\((\w+)\)")


def venn_generate(prompt: str, max_tokens: int) -> str:
    """Rule-based mock model.

    Summaries name the first topic tag. A completion copies the first
    answer line found in retrieved context; with none it falls back to a
    hypothetical line naming the first intent tag.
    """
    if prompt.startswith(_SUMMARY_PROMPT):
        m = _TOPIC.search(prompt)
        return f"topic {m.group(1)}" if m else ""
    m = _ANSWER_IN_CONTEXT.search(prompt)
    if m:
        return m.group(1)
    m = _INTENT.search(prompt)
    return f"intent {m.group(1)}" if m else ""


@dataclass(frozen=True)
class VennParams:
    tasks_per_solver: int = 10
    validation_per_solver: int = 20
    distractors: int = 60
    # query code lines (four words each) shared verbatim by the lexical target
    lexical_gold_lines: int = 5
    lexical_decoy_lines: int = 3
    # query words a tagged target shares, in shuffled order, when it is gold
    tagged_gold_words: int = 8
    passes: int = 10


@dataclass
class VennWorld:
    snippets: list[CodeSnippet]
    test_tasks: list[CompletionTask]
    validation_tasks: list[CompletionTask]
    solver: dict[str, PerspectiveId]
    pipeline: Pipeline = field(repr=False)


class _Words:
    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.n = 0

    def fresh(self, k: int = 1) -> list[str]:
        out = []
        for _ in range(k):
            self.n += 1
            out.append(f"w{self.n}x{self.rng.randrange(10**6)}")
        return out

    def tag(self) -> str:
        return self.fresh()[0].replace("w", "g", 1)


_QUERY_LINES = 5
_BODY_LINES = 8


def _code_lines(words: Sequence[str], per_line: int = 4) -> list[str]:
    return [f"call({', '.join(words[i:i + per_line])});" for i in range(0, len(words), per_line)]


def _snippet(repo: str, name: str, lines: Sequence[str]) -> CodeSnippet:
    text = "".join(line + "\n" for line in lines)
    n = len(lines)
    return CodeSnippet(snippet_id_for(repo, name, 1, n), repo, name, 1, n, text)


def _body(words: _Words, intent: str, topic: str, code: Sequence[str], answer: str) -> list[str]:
    """Tag lines, code padded to a fixed length, answer line in the masked middle slot."""
    lines = [f"use_intent({intent});", f"use_topic({topic});", *code]
    lines += _code_lines(words.fresh(4 * (_BODY_LINES - len(lines))))
    mid = len(lines) // 2
    return lines[:mid] + [answer] + lines[mid:]


def _make_case(words: _Words, rng: random.Random, p: VennParams, solver: PerspectiveId,
               tag: str, repo: str) -> tuple[CompletionTask, list[CodeSnippet]]:
    query = _code_lines(words.fresh(4 * _QUERY_LINES))
    intent, topic = f"i{tag}", f"t{tag}"
    prefix_lines = query[:-1] + [f"use_intent({intent});", f"use_topic({topic});"]
    gold = f"value = ans{tag};"
    prefix = "".join(line + "\n" for line in prefix_lines)
    suffix = "\n" + query[-1] + "\n"
    hole = len(prefix_lines) + 1
    task = CompletionTask(f"{repo}/{tag}.java#RL@{hole}", TaskKind.RANDOM_LINE,
                          prefix, suffix, gold, (repo, f"{tag}.java"), hole)
    query_words = re.findall(r"w\d+x\d+", "".join(query))

    def answer(p_id: PerspectiveId) -> str:
        return gold if p_id is solver else f"value = wrong{tag}{p_id.value.lower()};"

    n_lex = p.lexical_gold_lines if solver is PerspectiveId.LEXICAL else p.lexical_decoy_lines
    keep = sorted(rng.sample(range(_QUERY_LINES), n_lex))
    lex = _body(words, words.tag(), words.tag(), [query[i] for i in keep], answer(PerspectiveId.LEXICAL))

    def tagged_code(p_id: PerspectiveId) -> list[str]:
        shared = rng.sample(query_words, p.tagged_gold_words) if p_id is solver else []
        mixed = shared + words.fresh(p.tagged_gold_words - len(shared))
        rng.shuffle(mixed)
        return _code_lines(mixed)

    hypo = _body(words, intent, words.tag(), tagged_code(PerspectiveId.HYPO_LINE), answer(PerspectiveId.HYPO_LINE))
    summ = _body(words, words.tag(), topic, tagged_code(PerspectiveId.SUMMARY), answer(PerspectiveId.SUMMARY))
    snippets = [_snippet(repo, f"{tag}-{name}.java", lines)
                for name, lines in (("lex", lex), ("hypo", hypo), ("sum", summ))]
    return task, snippets


def venn_world(seed: int, params: VennParams | None = None, dim: int = 512) -> VennWorld:
    """Corpus, tasks and a ready pipeline; selectors are not trained yet."""
    p = params or VennParams()
    rng = random.Random(seed)
    words = _Words(rng)
    repo = f"venn{seed}"
    snippets: list[CodeSnippet] = []
    solver: dict[str, PerspectiveId] = {}

    def cases(prefix: str, per_solver: int) -> list[CompletionTask]:
        out = []
        for s in SOLVERS:
            for i in range(per_solver):
                task, snips = _make_case(words, rng, p, s, f"{prefix}{s.value.lower()}{i}", repo)
                out.append(task)
                snippets.extend(snips)
                solver[task.task_id] = s
        return out

    test = cases("t", p.tasks_per_solver)
    validation = cases("v", p.validation_per_solver)
    for i in range(p.distractors):
        body = _body(words, words.tag(), words.tag(), [], f"value = noise{i};")
        snippets.append(_snippet(repo, f"d{i}.java", body))

    embedder = LocalEmbedder(dim)
    generator = CallableGenerator(venn_generate, "venn-mock")
    cfg = RetrievalConfig()
    indexes = {persp.id: build_perspective_index(snippets, persp, embedder, generator, cfg=cfg)
               for persp in DEFAULT_PERSPECTIVES}
    pipeline = Pipeline(DEFAULT_PERSPECTIVES, indexes, embedder, generator, PromptConfig(), cfg)
    return VennWorld(snippets, test, validation, solver, pipeline)


VENN_STRATEGIES: tuple[Strategy, ...] = (
    single(PerspectiveId.LEXICAL), single(PerspectiveId.HYPO_LINE), single(PerspectiveId.SUMMARY),
    UNION, MAXSIM, LOGISTIC, LINUCB,
)


def train_selectors(world: VennWorld, seed: int, passes: int | None = None, alpha: float = 0.1) -> None:
    """Fit LinUCB (on-policy) and the logistic baseline on the validation tasks."""
    pipe = world.pipeline
    n_arms = len(pipe.arms)
    pipe.linucb = train_linucb(linucb_init(n_arms, alpha=alpha), world.validation_tasks, pipe,
                               passes=passes or VennParams().passes, shuffle_seed=seed)
    samples = [(pipe.arm_features(t), [pipe.arm_reward(t, a) for a in range(n_arms)])
               for t in world.validation_tasks]
    pipe.logistic = logistic_train(samples)


def venn_em(seed: int, params: VennParams | None = None,
            strategies: Sequence[Strategy] = VENN_STRATEGIES) -> dict[str, float]:
    """EM (x100) per strategy on the test tasks of one world."""
    world = venn_world(seed, params)
    train_selectors(world, seed, (params or VennParams()).passes)
    out = {}
    for strategy in strategies:
        recs = [world.pipeline.complete_task(t, strategy) for t in world.test_tasks]
        out[strategy.name] = 100.0 * sum(r.em for r in recs) / len(recs)
    return out
