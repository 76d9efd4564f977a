"""Speaker verification against same-speaker other-emotion backgrounds.

Each claimant enrolls one model per emotion.  A claim on an utterance with
identified emotion e* is scored as a log-likelihood ratio: the claimed
speaker's e* model versus the mean log score under that same speaker's
other-emotion models.  The claim is accepted when the ratio clears the
threshold, which may optionally track the running mean of recent trial
scores.  A one-stage baseline drops the emotion conditioning: one pooled
model per speaker, scored against the mean of the other speakers' pooled
models.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .frontend import ObservationPair
from .hmm import HmmModel, TrainConfig, avg_frame_ll, init_model, train_baum_welch
from .manifest import CorpusManifest, UtteranceRef
from .seeds import derive_seed
from .sphmm import SphmmModel, score_fused, train_sphmm
from .stage_a import EmotionModelSet, identify_emotion

MODES = ("two_stage", "oracle_emotion", "worst_case", "one_stage")

TRIAL_CSV_HEADER = "utterance,claimed,true,e_star,mode,lambda,theta,decision,truth"


def _model_dim(model) -> int:
    return model.acoustic.dim if isinstance(model, SphmmModel) else model.dim


def _score(model, obs: ObservationPair) -> float:
    """Fused score for sphmm models, plain acoustic score otherwise."""
    if isinstance(model, SphmmModel):
        return score_fused(model, obs)
    return avg_frame_ll(model, obs.acoustic)


@dataclass(frozen=True)
class SpeakerEmotionModelSet:
    """(speaker, emotion) -> model, complete over the emotion set."""

    emotion_set: tuple[str, ...]
    models: dict[tuple[str, str], HmmModel | SphmmModel]

    def __post_init__(self):
        object.__setattr__(self, "emotion_set", tuple(self.emotion_set))
        if len(self.emotion_set) < 2:
            raise ValueError("need at least 2 emotions for a background")
        if not self.models:
            raise ValueError("no speakers enrolled")
        for speaker, emotion in self.models:
            if emotion not in self.emotion_set:
                raise ValueError(f"model for undeclared emotion {emotion!r}")
        for speaker in self.speakers:
            for emotion in self.emotion_set:
                if (speaker, emotion) not in self.models:
                    raise ValueError(f"({speaker}, {emotion}) unenrolled")
        if len({_model_dim(m) for m in self.models.values()}) != 1:
            raise ValueError("enrolled models disagree on feature dim")
        if len({isinstance(m, SphmmModel) for m in self.models.values()}) != 1:
            raise ValueError("enrolled models mix fused and plain kinds")

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(speaker for speaker, _ in self.models))

    @property
    def n_backgrounds(self) -> int:
        """Imposter-emotion models behind each claim: one per other emotion."""
        return len(self.emotion_set) - 1

    @property
    def fused(self) -> bool:
        return isinstance(next(iter(self.models.values())), SphmmModel)

    def model(self, speaker: str, emotion: str):
        try:
            return self.models[speaker, emotion]
        except KeyError:
            raise ValueError(f"({speaker}, {emotion}) unenrolled") from None

    def with_alpha(self, alpha: float) -> "SpeakerEmotionModelSet":
        if not self.fused:
            raise ValueError("plain acoustic models carry no alpha")
        return SpeakerEmotionModelSet(
            self.emotion_set,
            {key: replace(m, alpha=alpha) for key, m in self.models.items()},
        )


@dataclass(frozen=True)
class PooledSpeakerModels:
    """speaker -> emotion-pooled model, for the one-stage baseline."""

    models: dict[str, HmmModel | SphmmModel]

    def __post_init__(self):
        if len(self.models) < 2:
            raise ValueError("need at least 2 pooled speakers for a background")
        if len({_model_dim(m) for m in self.models.values()}) != 1:
            raise ValueError("pooled models disagree on feature dim")

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(self.models)


@dataclass(frozen=True)
class TrialConfig:
    """Trial-plan and decision knobs; seed pins the whole run."""

    theta: float = 0.0
    adapt_window: int | None = None
    imposters_per_utterance: int = 1
    seed: int = 0
    workers: int = 0

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if self.adapt_window is not None and self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")
        if self.imposters_per_utterance < 0:
            raise ValueError("imposters_per_utterance must be >= 0")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")


@dataclass(frozen=True)
class TrialRecord:
    """One verification attempt, with its score, decision, and ground truth."""

    utterance: UtteranceRef
    claimed_speaker: str
    true_speaker: str
    e_star: str
    mode: str
    llr: float
    theta: float
    decision: str
    truth: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.decision != ("accept" if self.llr >= self.theta else "reject"):
            raise ValueError("decision contradicts llr >= theta")
        if self.truth != ("target" if self.claimed_speaker == self.true_speaker else "nontarget"):
            raise ValueError("truth contradicts claimed vs true speaker")


def enroll(
    manifest: CorpusManifest,
    features,
    n_states: int,
    n_mixtures: int,
    cfg: TrainConfig | None = None,
    fused: bool = False,
    alpha: float = 0.5,
    **sphmm_kwargs,
) -> SpeakerEmotionModelSet:
    """Train one model per (claimant, emotion) from that pair's train split.

    features maps utterance id to ObservationPair.  Every pair trains with
    its own seed derived from cfg.seed, so the acoustic model of a fused
    enrollment matches the plain enrollment bit for bit.  fused=False
    (the default) trains acoustic-only models; fused=True trains full
    two-stream models scored at the given alpha.
    """
    cfg = cfg or TrainConfig()
    if sphmm_kwargs and not fused:
        raise ValueError("sphmm options need fused=True")
    if not manifest.claimants:
        raise ValueError("manifest declares no claimants")
    models: dict[tuple[str, str], HmmModel | SphmmModel] = {}
    for speaker in manifest.claimants:
        for emotion in manifest.emotion_set:
            rows = manifest.subset(split="train", speaker=speaker, emotion=emotion)
            if not rows:
                raise ValueError(f"({speaker}, {emotion}) unenrolled")
            pair_cfg = replace(cfg, seed=derive_seed(cfg.seed, "stage_b", speaker, emotion))
            obs_list = [features[u.id] for u in rows]
            if fused:
                models[speaker, emotion] = train_sphmm(
                    obs_list, n_states, n_mixtures, alpha=alpha, cfg=pair_cfg, **sphmm_kwargs
                )
            else:
                acoustics = [o.acoustic for o in obs_list]
                init = init_model(acoustics, n_states, n_mixtures, pair_cfg)
                models[speaker, emotion], _ = train_baum_welch(init, acoustics, pair_cfg)
    return SpeakerEmotionModelSet(manifest.emotion_set, models)


def enroll_pooled(
    manifest: CorpusManifest,
    features,
    n_states: int,
    n_mixtures: int,
    cfg: TrainConfig | None = None,
    fused: bool = False,
    alpha: float = 0.5,
    **sphmm_kwargs,
) -> PooledSpeakerModels:
    """Train one emotion-pooled model per claimant for the one-stage baseline."""
    cfg = cfg or TrainConfig()
    if sphmm_kwargs and not fused:
        raise ValueError("sphmm options need fused=True")
    models: dict[str, HmmModel | SphmmModel] = {}
    for speaker in manifest.claimants:
        rows = manifest.subset(split="train", speaker=speaker)
        if not rows:
            raise ValueError(f"speaker {speaker!r} has no training utterances")
        pooled_cfg = replace(cfg, seed=derive_seed(cfg.seed, "pooled", speaker))
        obs_list = [features[u.id] for u in rows]
        if fused:
            models[speaker] = train_sphmm(
                obs_list, n_states, n_mixtures, alpha=alpha, cfg=pooled_cfg, **sphmm_kwargs
            )
        else:
            acoustics = [o.acoustic for o in obs_list]
            init = init_model(acoustics, n_states, n_mixtures, pooled_cfg)
            models[speaker], _ = train_baum_welch(init, acoustics, pooled_cfg)
    return PooledSpeakerModels(models)


def llr_from_scores(scores: Mapping[str, float], e_star: str) -> float:
    """Claimed-emotion score minus the mean of the other emotions' scores."""
    if e_star not in scores:
        raise ValueError(f"unknown emotion {e_star!r}")
    others = [s for e, s in scores.items() if e != e_star]
    if not others:
        raise ValueError("need at least 2 emotions for a background")
    return scores[e_star] - float(np.mean(others))


def speaker_scores(
    models: SpeakerEmotionModelSet, claimed: str, obs: ObservationPair
) -> dict[str, float]:
    """The claimed speaker's score under each of their emotion models."""
    if claimed not in set(models.speakers):
        raise ValueError(f"claimed speaker {claimed!r} is not enrolled")
    return {e: _score(models.model(claimed, e), obs) for e in models.emotion_set}


def llr(models: SpeakerEmotionModelSet, claimed: str, e_star: str, obs: ObservationPair) -> float:
    """Log-likelihood ratio of the claim (claimed speaker, emotion e_star)."""
    return llr_from_scores(speaker_scores(models, claimed, obs), e_star)


def pooled_llr(scores: Mapping[str, float], claimed: str) -> float:
    """One-stage ratio: claimed pooled score minus the other speakers' mean."""
    if claimed not in scores:
        raise ValueError(f"claimed speaker {claimed!r} is not enrolled")
    others = [s for sp, s in scores.items() if sp != claimed]
    if not others:
        raise ValueError("need at least 2 speakers for a background")
    return scores[claimed] - float(np.mean(others))


def decide(llr_value: float, theta: float) -> str:
    """Accept iff the ratio clears the threshold; the boundary accepts."""
    if not (math.isfinite(llr_value) and math.isfinite(theta)):
        raise ValueError("score and threshold must both be finite")
    return "accept" if llr_value >= theta else "reject"


def adapt_threshold(theta_init: float, history: Sequence[float], window: int) -> float:
    """Mean of the most recent min(window, len(history)) scores.

    An empty history keeps the initial threshold, so the first trial of a
    run always decides against theta_init.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    recent = list(history)[-window:]
    if not recent:
        return theta_init
    return float(np.mean(recent))


def trial_plan(
    manifest: CorpusManifest, enrolled: Sequence[str], cfg: TrialConfig
) -> tuple[tuple[UtteranceRef, str], ...]:
    """(test utterance, claimed speaker) pairs in deterministic order.

    Each test utterance contributes one target claim when its speaker is
    enrolled, then imposters_per_utterance distinct false claims drawn with
    a per-utterance seed, so the plan never depends on iteration order.
    """
    enrolled = list(dict.fromkeys(enrolled))
    enrolled_set = set(enrolled)
    plan: list[tuple[UtteranceRef, str]] = []
    for utt in manifest.subset(split="test"):
        if utt.speaker_id in enrolled_set:
            plan.append((utt, utt.speaker_id))
        candidates = [s for s in enrolled if s != utt.speaker_id]
        n_claims = min(cfg.imposters_per_utterance, len(candidates))
        if n_claims:
            rng = np.random.default_rng(derive_seed(cfg.seed, "plan", utt.id))
            picks = rng.permutation(len(candidates))[:n_claims]
            plan.extend((utt, candidates[i]) for i in picks)
    return tuple(plan)


def _wrong_emotion(emotion_set: Sequence[str], utt: UtteranceRef, seed: int) -> str:
    """A seeded uniform draw over the labels other than the true one."""
    others = [e for e in emotion_set if e != utt.emotion]
    rng = np.random.default_rng(derive_seed(seed, "worst", utt.id))
    return others[int(rng.integers(len(others)))]


# Scoring tasks run in worker processes; the models travel once per worker
# through the initializer instead of once per task.
_WORKER: dict = {}


def _init_worker(payload) -> None:
    _WORKER["payload"] = payload


def _score_utterance(task):
    utt_id, obs, claims, identify = task
    models, emotion_models, mode = _WORKER["payload"]
    if mode == "one_stage":
        table = {sp: _score(m, obs) for sp, m in models.models.items()}
    else:
        table = {c: speaker_scores(models, c, obs) for c in claims}
    best = identify_emotion(emotion_models, obs)[0] if identify else None
    return utt_id, table, best


def _score_plan(models, emotion_models, mode, plan, features, workers):
    """Score every planned claim, one task per utterance.

    Returns ({utterance id -> score table}, {utterance id -> identified
    emotion or None}).  Results are keyed, so the worker count never
    changes the outcome.
    """
    claims_by_utt: dict[str, list[str]] = {}
    obs_by_utt: dict[str, ObservationPair] = {}
    for utt, claimed in plan:
        claims_by_utt.setdefault(utt.id, []).append(claimed)
        obs_by_utt.setdefault(utt.id, features[utt.id])
    identify = mode == "two_stage"
    tasks = [
        (utt_id, obs_by_utt[utt_id], tuple(claims), identify)
        for utt_id, claims in claims_by_utt.items()
    ]
    payload = (models, emotion_models, mode)
    if workers == 0:
        _init_worker(payload)
        results = [_score_utterance(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(payload,)
        ) as pool:
            results = list(pool.map(_score_utterance, tasks, chunksize=chunk))
    tables = {utt_id: table for utt_id, table, _ in results}
    identified = {utt_id: best for utt_id, _, best in results}
    return tables, identified


def run_trials(
    models,
    emotion_models: EmotionModelSet | None,
    manifest: CorpusManifest,
    features,
    mode: str = "two_stage",
    cfg: TrialConfig | None = None,
) -> list[TrialRecord]:
    """Execute the deterministic trial plan in the given mode.

    two_stage identifies each utterance's emotion with the stage-a models;
    oracle_emotion uses the true label; worst_case draws a seeded wrong
    label once per utterance; one_stage scores PooledSpeakerModels with no
    emotion conditioning (e_star left empty).  The records are a pure
    function of (models, manifest, mode, cfg.seed).
    """
    cfg = cfg or TrialConfig()
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "one_stage":
        if not isinstance(models, PooledSpeakerModels):
            raise ValueError("one_stage mode needs PooledSpeakerModels")
    else:
        if not isinstance(models, SpeakerEmotionModelSet):
            raise ValueError(f"{mode} mode needs a SpeakerEmotionModelSet")
        if models.emotion_set != manifest.emotion_set:
            raise ValueError("model and manifest emotion sets differ")
    if mode == "two_stage":
        if emotion_models is None:
            raise ValueError("two_stage mode needs stage-a emotion models")
        if emotion_models.emotions != manifest.emotion_set:
            raise ValueError("stage-a and manifest emotion sets differ")

    plan = trial_plan(manifest, models.speakers, cfg)
    if not plan:
        return []
    tables, identified = _score_plan(models, emotion_models, mode, plan, features, cfg.workers)

    e_star_by_utt: dict[str, str] = {}
    if mode != "one_stage":
        for utt, _ in plan:
            if utt.id in e_star_by_utt:
                continue
            if mode == "oracle_emotion":
                e_star_by_utt[utt.id] = utt.emotion
            elif mode == "worst_case":
                e_star_by_utt[utt.id] = _wrong_emotion(manifest.emotion_set, utt, cfg.seed)
            else:
                e_star_by_utt[utt.id] = identified[utt.id]

    records: list[TrialRecord] = []
    history: list[float] = []
    for utt, claimed in plan:
        if mode == "one_stage":
            lam = pooled_llr(tables[utt.id], claimed)
            e_star = ""
        else:
            e_star = e_star_by_utt[utt.id]
            lam = llr_from_scores(tables[utt.id][claimed], e_star)
        theta = cfg.theta
        if cfg.adapt_window is not None:
            theta = adapt_threshold(cfg.theta, history, cfg.adapt_window)
        records.append(
            TrialRecord(
                utterance=utt,
                claimed_speaker=claimed,
                true_speaker=utt.speaker_id,
                e_star=e_star,
                mode=mode,
                llr=lam,
                theta=theta,
                decision=decide(lam, theta),
                truth="target" if claimed == utt.speaker_id else "nontarget",
            )
        )
        history.append(lam)
    return records


def write_trials(records: Sequence[TrialRecord], path) -> None:
    """One CSV row per trial, floats in repr form so reruns match byte-wise."""
    lines = [TRIAL_CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                (
                    r.utterance.id,
                    r.claimed_speaker,
                    r.true_speaker,
                    r.e_star,
                    r.mode,
                    repr(r.llr),
                    repr(r.theta),
                    r.decision,
                    r.truth,
                )
            )
        )
    with open(path, "w", newline="\n") as fp:
        fp.write("\n".join(lines) + "\n")
