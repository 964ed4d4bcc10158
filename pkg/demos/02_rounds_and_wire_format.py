# %% [markdown]
# # What crosses the wire
#
# A federated round is a conversation between the aggregator and each site.
# This walk-through drives two `SiteWorker`s by hand, looks at the encoded
# frames, and then runs the same federation over loopback TCP.

# %%
import numpy as np

from ffl.data import default_synthetic_config, generate_synthetic
from ffl.federated import (
    Aggregator,
    EnterFineTune,
    FederationConfig,
    Shutdown,
    SiteSpec,
    SiteWorker,
    decode_message,
    encode_message,
    run_federated,
    run_federated_tcp,
)
from ffl.federated.wire import params_equal
from ffl.nn import Dense, ModelSpec, ReLU

a, b = generate_synthetic(default_synthetic_config(), (120, 400), seed=0)
backbone = ModelSpec((32,), [Dense("fc1", 32, 16), ReLU()])
sites = [SiteSpec("A", backbone, a), SiteSpec("B", backbone, b)]
cfg = FederationConfig(rounds=3, fine_tune_epochs=1, seed=0)

# %% [markdown]
# ## One round by hand
#
# The aggregator broadcasts `GlobalBackbone(r)`. Each site adopts it, trains
# for one local epoch and answers with `LocalBackbone(r)`. Only backbone
# tensors are in these messages. The head (`head.weight`, `head.bias`) is
# private to each site.

# %%
workers = {s.site_id: SiteWorker(s, cfg) for s in sites}
agg = Aggregator(cfg, backbone, list(workers))

msg = agg.broadcast(0)
frame = encode_message(msg)
print("GlobalBackbone frame:", len(frame), "bytes; header", frame[:10].hex(" "))
print("tensors on the wire:", list(msg.params))

replies = [workers[sid].handle(decode_message(frame)) for sid in sorted(workers)]
for r in replies:
    print(f"site {r.site_id}: n_train={r.n_train} train_loss={r.train_loss:.4f}")

stop = agg.collect(0, replies)
heads_before = {sid: w.state.params.head for sid, w in workers.items()}

# %% [markdown]
# Repeating the round number tells the sites "this is the aggregate of the
# round you just trained": they adopt it without training again.

# %%
result = agg.broadcast(0)
for w in workers.values():
    assert w.handle(result) is None
for sid, w in workers.items():
    assert params_equal(w.state.params.head, heads_before[sid])
print("after aggregation both sites hold the same backbone:",
      params_equal(workers["A"].state.params.backbone, workers["B"].state.params.backbone))

# %% [markdown]
# After the last round come `EnterFineTune` (local epochs, nothing sent) and
# `Shutdown`. Both are empty frames.

# %%
print(encode_message(EnterFineTune()).hex(" "), "|", encode_message(Shutdown()).hex(" "))

# %% [markdown]
# ## Same run, two transports
#
# Summation happens in ascending site-id order at a barrier, so thread
# scheduling and TCP arrival order cannot change the numbers.

# %%
inproc = run_federated(cfg, sites)
tcp = run_federated_tcp(cfg, sites)
for sid in ("A", "B"):
    same = params_equal(inproc.sites[sid].full_params(), tcp.sites[sid].full_params())
    print(f"site {sid}: in-process and TCP models identical -> {same}")
print("per-round mean training loss:", np.round([r.mean_loss for r in inproc.rounds], 4))
