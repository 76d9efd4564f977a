"""Shared helpers: small in-memory synthetic corpora for pipeline tests."""

from emoverify.synthetic import base_manifest, generator_models, synthesize_utterance


def make_corpus(spec):
    """(manifest, {utterance id -> ObservationPair}, generator models)."""
    models = generator_models(spec)
    manifest = base_manifest(spec)
    features = {u.id: synthesize_utterance(spec, models, u) for u in manifest.utterances}
    return manifest, features, models
