//! Truncated bivariate power series in `u = y^{-1}`, `w = z^{-1}`, used to
//! expand the generating-function form of the recursion coefficient by
//! coefficient. Coefficients with both indices `≤ k` are exact.

#![allow(dead_code)]

#[derive(Clone, Debug)]
pub struct Bi {
    pub k: usize,
    pub c: Vec<Vec<f64>>,
}

impl Bi {
    pub fn zero(k: usize) -> Self {
        Self { k, c: vec![vec![0.0; k + 1]; k + 1] }
    }

    pub fn in_w(k: usize, s: &[f64]) -> Self {
        let mut b = Self::zero(k);
        for (j, &v) in s.iter().enumerate().take(k + 1) {
            b.c[0][j] = v;
        }
        b
    }

    pub fn in_u(k: usize, s: &[f64]) -> Self {
        let mut b = Self::zero(k);
        for (i, &v) in s.iter().enumerate().take(k + 1) {
            b.c[i][0] = v;
        }
        b
    }

    pub fn monomial(k: usize, i: usize, j: usize, v: f64) -> Self {
        let mut b = Self::zero(k);
        b.c[i][j] = v;
        b
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut b = self.clone();
        for i in 0..=self.k {
            for j in 0..=self.k {
                b.c[i][j] += o.c[i][j];
            }
        }
        b
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut b = self.clone();
        b.c.iter_mut().flatten().for_each(|v| *v *= s);
        b
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &Self) -> Self {
        let k = self.k;
        let mut b = Self::zero(k);
        for i1 in 0..=k {
            for j1 in 0..=k {
                let x = self.c[i1][j1];
                if x == 0.0 {
                    continue;
                }
                for i2 in 0..=k - i1 {
                    for j2 in 0..=k - j1 {
                        b.c[i1 + i2][j1 + j2] += x * o.c[i2][j2];
                    }
                }
            }
        }
        b
    }
}

/// `[S(y) - S(z)] / (y^{-1} - z^{-1})` by exact division of
/// `Σ s_n (u^n - w^n)` by `u - w`; needs `s` up to index `k + 1`.
pub fn delta(k: usize, s: &[f64]) -> Bi {
    let m = k + 1;
    // numerator N_{i,j}
    let mut num = vec![vec![0.0; m + 1]; m + 1];
    for (n, &v) in s.iter().enumerate().take(m + 1) {
        num[n][0] += v;
        num[0][n] -= v;
    }
    // (u - w) Q = N  =>  Q_{i-1,j} = N_{i,j} + Q_{i,j-1}
    let mut q = vec![vec![0.0; m + 1]; m + 1];
    for j in 0..=m {
        for i in (1..=m).rev() {
            let prev = if j > 0 { q[i][j - 1] } else { 0.0 };
            q[i - 1][j] = num[i][j] + prev;
        }
    }
    let mut b = Bi::zero(k);
    for i in 0..=k {
        for j in 0..=k {
            b.c[i][j] = q[i][j];
        }
    }
    b
}

/// `z^{-1} S(z)` coefficients.
pub fn shifted(s: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend_from_slice(s);
    v
}

/// `F_{P,Q,Θ}`, the coefficient of `A` in the multiplied-through form.
pub fn f_pq_theta(k: usize, p: &[f64], q: &[f64], r: &[f64]) -> Bi {
    let one_minus_w = Bi::in_w(k, &[1.0, -1.0]);
    let pz = Bi::in_w(k, p);
    let qz = Bi::in_w(k, q);
    let rz = Bi::in_w(k, r);
    let cross = pz.mul(&delta(k, r)).sub(&rz.mul(&delta(k, p)));
    let t1 = delta(k, &shifted(p)).sub(&delta(k, p)).mul(&qz);
    let t2 = one_minus_w.mul(&pz).mul(&delta(k, q));
    let t3 = one_minus_w.scale(-1.0).mul(&cross);
    let t4 = Bi::monomial(k, 1, 0, 1.0).mul(&cross);
    t1.add(&t2).add(&t3).add(&t4)
}

/// `P(z)Δ_R - R(z)Δ_P`, the coefficient of `D`.
pub fn d_coefficient(k: usize, p: &[f64], r: &[f64]) -> Bi {
    Bi::in_w(k, p).mul(&delta(k, r)).sub(&Bi::in_w(k, r).mul(&delta(k, p)))
}

/// `Q(y)Q(z)(Δ_{Θ_1} - Δ_Θ)`, the coefficient of `Σ`.
pub fn sigma_coefficient(k: usize, q: &[f64], theta: &[f64]) -> Bi {
    let qq = Bi::in_u(k, q).mul(&Bi::in_w(k, q));
    qq.mul(&delta(k, &shifted(theta)).sub(&delta(k, theta)))
}

/// `F_{G,Θ} = (y^{-1} + z^{-1} - 1)[G(z)Δ_Θ - Θ(z)Δ_G] + Δ_{G_1} - Δ_G`.
pub fn f_g_theta(k: usize, g: &[f64], theta: &[f64]) -> Bi {
    let lead = Bi::zero(k).add(&Bi::monomial(k, 1, 0, 1.0)).add(&Bi::monomial(k, 0, 1, 1.0)).add(&Bi::monomial(k, 0, 0, -1.0));
    let inner = Bi::in_w(k, g).mul(&delta(k, theta)).sub(&Bi::in_w(k, theta).mul(&delta(k, g)));
    lead.mul(&inner).add(&delta(k, &shifted(g))).sub(&delta(k, g))
}
