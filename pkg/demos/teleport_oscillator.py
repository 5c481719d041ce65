"""Continuously teleporting a squeezed field onto an oscillator.

The oscillator couples to one half of a two-mode squeezed source through
``s = c^dag``; a Bell measurement of the outgoing field is fed back as
displacements.  The unconditional dynamics then damp the oscillator into a
copy of the input state: vacuum in, ground state out; squeezed in, the same
squeezing out.
"""

from bellflow.noise import SqueezingSpec, db_from_variance, squeezing_from_db
from bellflow.protocols.teleport import bosonic_teleport_model, teleport_liouvillian, teleport_steady_state
from bellflow.feedback import verify_jump_form

res = teleport_steady_state(SqueezingSpec.vacuum(), 30)
print(f"vacuum input: ground-state fidelity {res.ground_fidelity:.12f}")

for db in (-3.0, -6.0):
    sq = squeezing_from_db(db)
    res = teleport_steady_state(sq, 40)
    print(f"{db:+.0f} dB input: oscillator at {db_from_variance(res.min_variance):+.6f} dB, purity {res.purity:.8f}")

# The generator is a single damping channel toward the input state.
sq = squeezing_from_db(-6.0)
m = bosonic_teleport_model(sq, 30)
rep = verify_jump_form(teleport_liouvillian(sq, 30), [(m.expected_rate, m.expected_jump)])
ch = rep.channels[0]
print(f"single channel: rate {ch.found_rate:.6f} (2N+1 = {2 * sq.N + 1:.6f}), overlap {ch.overlap:.12f}")

# Imperfect detection adds noise and the copy degrades.
for eta in (1.0, 0.9, 0.7):
    res = teleport_steady_state(sq, 30, eta=eta, check_kernel=False)
    print(f"eta={eta}: {db_from_variance(res.min_variance):+.3f} dB")
