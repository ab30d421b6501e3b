use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};

/// Weights of one GRU cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCellParams {
    /// `[hidden × input]`
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    /// `[hidden × hidden]`
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    /// `[hidden]`
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

const NAMES: [&str; 9] = ["W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"];

impl GruCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self::build(input, hidden, &mut |shape, _| Tensor::zeros(shape))
    }

    pub(crate) fn build(
        input: usize,
        hidden: usize,
        make: &mut impl FnMut(&[usize], usize) -> Tensor,
    ) -> Self {
        GruCellParams {
            w_z: make(&[hidden, input], input),
            w_r: make(&[hidden, input], input),
            w_h: make(&[hidden, input], input),
            u_z: make(&[hidden, hidden], hidden),
            u_r: make(&[hidden, hidden], hidden),
            u_h: make(&[hidden, hidden], hidden),
            b_z: make(&[hidden], hidden),
            b_r: make(&[hidden], hidden),
            b_h: make(&[hidden], hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r,
            &self.b_h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let expected: [&[usize]; 9] = [
            &[h, i],
            &[h, i],
            &[h, i],
            &[h, h],
            &[h, h],
            &[h, h],
            &[h],
            &[h],
            &[h],
        ];
        for (t, want) in self.tensors().into_iter().zip(expected) {
            if t.shape() != want {
                return Err(Error::shape("gru cell", want, t.shape()));
            }
        }
        Ok(())
    }

    pub(crate) fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    pub(crate) fn push_named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        let tensors = [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ];
        for (name, t) in NAMES.iter().zip(tensors) {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> GruVars {
        let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] = self.tensors().map(|t| tape.leaf(t.clone()));
        GruVars {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

impl GruVars {
    pub fn leaves(&self) -> [Var; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h,
        ]
    }

    pub fn step(&self, t: &mut Tape, h: Var, x: Var) -> Result<Var> {
        let gate = |t: &mut Tape, w: Var, u: Var, b: Var, hh: Var| -> Result<Var> {
            let wx = t.matvec(w, x)?;
            let uh = t.matvec(u, hh)?;
            let s = t.add(wx, uh)?;
            t.add(s, b)
        };
        let z_pre = gate(t, self.w_z, self.u_z, self.b_z, h)?;
        let z = t.sigmoid(z_pre);
        let r_pre = gate(t, self.w_r, self.u_r, self.b_r, h)?;
        let r = t.sigmoid(r_pre);
        let rh = t.mul(r, h)?;
        let cand_pre = gate(t, self.w_h, self.u_h, self.b_h, rh)?;
        let cand = t.tanh(cand_pre);
        let keep = t.affine(z, -1.0, 1.0);
        let old = t.mul(keep, h)?;
        let new = t.mul(z, cand)?;
        t.add(old, new)
    }
}

/// One GRU update `h' = (1 − z) ⊙ h + z ⊙ ĥ`.
pub fn gru_step(cell: &GruCellParams, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
    cell.validate()?;
    if h_prev.shape() != [cell.hidden_dim()] {
        return Err(Error::shape("gru_step hidden", &[cell.hidden_dim()], h_prev.shape()));
    }
    if x.shape() != [cell.input_dim()] {
        return Err(Error::shape("gru_step input", &[cell.input_dim()], x.shape()));
    }
    let mut tape = Tape::new();
    let vars = cell.bind(&mut tape);
    let h = tape.leaf(h_prev.clone());
    let xv = tape.leaf(x.clone());
    let out = vars.step(&mut tape, h, xv)?;
    Ok(tape.value(out).clone())
}
