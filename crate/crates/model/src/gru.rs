//! Standard gated recurrent unit: update gate z, reset gate r, candidate c.
//!
//!   z = σ(x Wz + h Uz + bz)
//!   r = σ(x Wr + h Ur + br)
//!   c = tanh(x Wh + (r ⊙ h) Uh + bh)
//!   h' = (1 − z) ⊙ h + z ⊙ c

use rand::Rng;

use crate::params::Params;
use crate::tape::{Tape, Var};
use crate::Vars;

pub(crate) fn gru_params<R: Rng>(p: &mut Params, rng: &mut R, prefix: &str, input: usize, state: usize) {
    for gate in ["z", "r", "h"] {
        p.add_init(rng, &format!("{prefix}.w{gate}"), input, state);
        p.add_init(rng, &format!("{prefix}.u{gate}"), state, state);
        p.add_init(rng, &format!("{prefix}.b{gate}"), 1, state);
    }
}

pub(crate) struct GruCell {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

/// Input-side gate pre-activations, bias included.
pub(crate) struct Projected {
    pub z: Var,
    pub r: Var,
    pub h: Var,
}

impl GruCell {
    pub fn new(vars: &Vars, prefix: &str) -> Self {
        let get = |kind: &str, gate: &str| vars.get(&format!("{prefix}.{kind}{gate}"));
        GruCell {
            w: ["z", "r", "h"].map(|g| get("w", g)),
            u: ["z", "r", "h"].map(|g| get("u", g)),
            b: ["z", "r", "h"].map(|g| get("b", g)),
        }
    }

    pub fn project(&self, tape: &mut Tape, x: Var) -> Projected {
        let mut out = [x; 3];
        for i in 0..3 {
            let t = tape.matmul(x, self.w[i]);
            out[i] = tape.add_row(t, self.b[i]);
        }
        Projected { z: out[0], r: out[1], h: out[2] }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let p = self.project(tape, x);
        self.step_projected(tape, &p, h)
    }

    pub fn step_projected(&self, tape: &mut Tape, x: &Projected, h: Var) -> Var {
        let hz = tape.matmul(h, self.u[0]);
        let z = tape.add(x.z, hz);
        let z = tape.sigmoid(z);
        let hr = tape.matmul(h, self.u[1]);
        let r = tape.add(x.r, hr);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let hc = tape.matmul(rh, self.u[2]);
        let c = tape.add(x.h, hc);
        let c = tape.tanh(c);
        let keep = tape.one_minus(z);
        let keep = tape.mul(keep, h);
        let new = tape.mul(z, c);
        tape.add(keep, new)
    }
}
