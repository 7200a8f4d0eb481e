"""Unreplicated sequential executor used as an oracle for the engine."""

import random
from collections import defaultdict

from ftpads.core import MessageKey
from ftpads.engine import per_instance_rng_seed


def reference_digests(behavior, n_entities, steps, master_seed):
    behavior.setup(n_entities, master_seed)
    states = []
    rngs = []
    for e in range(n_entities):
        seed = per_instance_rng_seed(master_seed, e)
        states.append(behavior.on_init(e, seed))
        rngs.append(random.Random(seed))
    inbox = defaultdict(lambda: defaultdict(list))
    sent = 0
    for t in range(steps):
        due = inbox.pop(t, {})
        for e in range(n_entities):
            seqs = {}

            def emit(sends):
                nonlocal sent
                for s in sends or ():
                    seq = seqs.get(s.dst_entity, 0)
                    seqs[s.dst_entity] = seq + 1
                    key = MessageKey(e, s.dst_entity, t, seq, t + s.delay)
                    inbox[t + s.delay][s.dst_entity].append((key, s.payload))
                    sent += 1

            for key, payload in sorted(due.get(e, ())):
                emit(behavior.on_message(states[e], key.src_entity, payload, t, rngs[e]))
            emit(behavior.on_step(states[e], t, rngs[e]))
    digests = {e: behavior.state_digest(states[e]).hex() for e in range(n_entities)}
    return digests, sent
