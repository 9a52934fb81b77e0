import numpy as np
import pytest

from hashfed import codebook, data, protocol


def make_system(
    classes=2,
    code_bits=2,
    dim=6,
    n_per_class=120,
    separation=6.0,
    n_parties=2,
    hidden=(16,),
    top_hidden=32,
    lr=0.01,
    seed=3,
    epochs=6,
    batch_size=32,
    use_bn=True,
    use_consistency=True,
    do_train=True,
):
    """Small trained blobs system for protocol-level tests."""
    ds = data.synth_blobs(classes, n_per_class, dim, separation, seed)
    ds = data.with_partition(ds, [1.0 / n_parties] * n_parties)
    ds = data.train_test_split(ds, 0.7, seed=seed + 1)
    cb = codebook.generate_codebook(classes, code_bits, seed)
    rng = np.random.default_rng(seed)
    parties = [
        protocol.build_party(i, cols, list(hidden), code_bits, rng, lr=lr, use_bn=use_bn)
        for i, cols in enumerate(ds.feature_partition)
    ]
    server = protocol.build_server(cb, n_parties, top_hidden, rng, lr=lr)
    log = None
    if do_train:
        options = protocol.TrainOptions(
            epochs=epochs,
            batch_size=batch_size,
            base_lr=lr,
            seed=seed,
            use_consistency=use_consistency,
        )
        log = protocol.train(parties, server, ds, options)
    return ds, parties, server, log


@pytest.fixture(scope="session")
def blob_system():
    """Shared trained system; tests must treat it as read-only."""
    return make_system()
