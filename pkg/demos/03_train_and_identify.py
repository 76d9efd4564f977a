"""Train per-emotion models and identify emotions on held-out utterances.

The fused models score both streams; an acoustic-only mode of the same
set shows what the prosodic stream adds.
"""

from emoverify.hmm import TrainConfig
from emoverify.stage_a import confusion, identify_emotion, train_emotion_models
from emoverify.synthetic import SyntheticSpec, base_manifest, generator_models, synthesize_utterance

spec = SyntheticSpec(
    n_speakers=4,
    emotion_set=("neutral", "angry", "sad"),
    n_groups=4,
    n_reps=4,
    train_groups=(1, 2),
    n_states=1,
    acoustic_dim=4,
    prosodic_dim=3,
    block_size=3,
    length_range=(12, 20),
    separability=2.5,
    prosodic_emotion_scale=2.0,
    floor_weight=0.25,
    seed=3,
)

# in-memory corpus: manifest plus {utterance id -> ObservationPair}
models = generator_models(spec)
manifest = base_manifest(spec)
features = {u.id: synthesize_utterance(spec, models, u) for u in manifest.utterances}

emotion_models = train_emotion_models(
    manifest, features, n_states=1, n_mixtures=2, cfg=TrainConfig(max_iterations=5, seed=1)
)

# single utterance: the argmax label plus the full score vector
probe = next(u for u in manifest.utterances if u.split == "test")
label, scores = identify_emotion(emotion_models, features[probe.id])
print(f"{probe.id}: identified {label!r} (true {probe.emotion!r})")
for emotion, score in sorted(scores.items(), key=lambda kv: -kv[1]):
    print(f"  {emotion:<8} {score:8.3f}")

# whole test split: confusion matrix with column percentages
held_out = [(u.emotion, features[u.id]) for u in manifest.utterances if u.split == "test"]
matrix = confusion(emotion_models, held_out)
print()
print(matrix.to_csv())
print(f"fused accuracy: {matrix.accuracy:.1f}%")

acoustic_only = confusion(emotion_models.with_mode("hmm_only"), held_out)
print(f"acoustic-only accuracy: {acoustic_only.accuracy:.1f}%")
