//! Server quantum memory.
//!
//! [`SparseState`] is a superposition over tuples of register values, stored
//! as a sorted map from value tuples to amplitudes. [`ServerMemory`] keeps the
//! whole memory as a product of such states and merges factors only when an
//! operation spans several of them, so an honest run never holds more than a
//! handful of entangled registers at once.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, RngCore};

use crate::bits::{BitPermutation, Bits};
use crate::error::Error;
use crate::keys::KeyPair;
use crate::Complex;

/// Public register label. The client allocates labels and names them in
/// messages; the server uses them to address its memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u32);

const PRUNE: f64 = 1e-24;
const SPLIT_TOL: f64 = 1e-9;
const MAX_HADAMARD_RANK: usize = 20;

#[derive(Clone, Debug)]
pub struct SparseState {
    regs: Vec<(Reg, usize)>,
    branches: BTreeMap<Vec<Bits>, Complex>,
}

impl Default for SparseState {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseState {
    /// The zero-register state with amplitude 1.
    pub fn new() -> Self {
        let mut branches = BTreeMap::new();
        branches.insert(Vec::new(), Complex::new(1.0, 0.0));
        SparseState {
            regs: Vec::new(),
            branches,
        }
    }

    pub fn basis(reg: Reg, value: Bits) -> Self {
        let mut s = Self::new();
        s.add_register(reg, value).expect("fresh state has no registers");
        s
    }

    /// `(|x0> + |x1>) / sqrt(2)` in a single register.
    pub fn gadget(reg: Reg, keys: &KeyPair) -> Self {
        let a = Complex::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut branches = BTreeMap::new();
        branches.insert(alloc::vec![keys.x0.clone()], a);
        branches.insert(alloc::vec![keys.x1.clone()], a);
        SparseState {
            regs: alloc::vec![(reg, keys.width())],
            branches,
        }
    }

    /// Builds a state from explicit branches and normalizes it.
    pub fn from_branches(
        regs: Vec<(Reg, usize)>,
        branches: impl IntoIterator<Item = (Vec<Bits>, Complex)>,
    ) -> Result<Self, Error> {
        let mut map: BTreeMap<Vec<Bits>, Complex> = BTreeMap::new();
        for (vals, amp) in branches {
            if vals.len() != regs.len() {
                return Err(Error::Malformed("branch arity differs from register count"));
            }
            for (v, (_, w)) in vals.iter().zip(&regs) {
                if v.len() != *w {
                    return Err(Error::WidthMismatch {
                        expected: *w,
                        found: v.len(),
                    });
                }
            }
            *map.entry(vals).or_insert(Complex::new(0.0, 0.0)) += amp;
        }
        let mut s = SparseState {
            regs,
            branches: map,
        };
        s.normalize()?;
        Ok(s)
    }

    pub fn registers(&self) -> &[(Reg, usize)] {
        &self.regs
    }

    pub fn contains(&self, reg: Reg) -> bool {
        self.regs.iter().any(|(r, _)| *r == reg)
    }

    pub fn position(&self, reg: Reg) -> Result<usize, Error> {
        self.regs
            .iter()
            .position(|(r, _)| *r == reg)
            .ok_or(Error::UnknownRegister(reg))
    }

    pub fn width(&self, reg: Reg) -> Result<usize, Error> {
        Ok(self.regs[self.position(reg)?].1)
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> impl Iterator<Item = (&Vec<Bits>, &Complex)> {
        self.branches.iter()
    }

    pub fn amplitude(&self, values: &[Bits]) -> Complex {
        self.branches
            .get(values)
            .copied()
            .unwrap_or(Complex::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.branches.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<(), Error> {
        self.branches.retain(|_, a| a.norm_sqr() > PRUNE);
        let n = self.norm_sqr();
        if n <= PRUNE {
            return Err(Error::ZeroNorm);
        }
        let scale = 1.0 / libm::sqrt(n);
        for a in self.branches.values_mut() {
            *a *= scale;
        }
        Ok(())
    }

    /// Values a register takes across branches, in sorted order.
    pub fn values_of(&self, reg: Reg) -> Result<Vec<Bits>, Error> {
        let p = self.position(reg)?;
        let mut v: Vec<Bits> = self.branches.keys().map(|k| k[p].clone()).collect();
        v.sort();
        v.dedup();
        Ok(v)
    }

    /// Appends a register holding `value` on every branch.
    pub fn add_register(&mut self, reg: Reg, value: Bits) -> Result<(), Error> {
        if self.contains(reg) {
            return Err(Error::DuplicateRegister(reg));
        }
        self.regs.push((reg, value.len()));
        self.remap(|vals| vals.push(value.clone()));
        Ok(())
    }

    pub fn tensor(&self, other: &SparseState) -> Result<SparseState, Error> {
        if let Some((r, _)) = other.regs.iter().find(|(r, _)| self.contains(*r)) {
            return Err(Error::DuplicateRegister(*r));
        }
        let mut regs = self.regs.clone();
        regs.extend_from_slice(&other.regs);
        let mut branches = BTreeMap::new();
        for (a, x) in &self.branches {
            for (b, y) in &other.branches {
                let mut k = a.clone();
                k.extend(b.iter().cloned());
                branches.insert(k, x * y);
            }
        }
        Ok(SparseState { regs, branches })
    }

    fn remap(&mut self, mut f: impl FnMut(&mut Vec<Bits>)) {
        let old = core::mem::take(&mut self.branches);
        for (mut k, a) in old {
            f(&mut k);
            *self.branches.entry(k).or_insert(Complex::new(0.0, 0.0)) += a;
        }
        self.branches.retain(|_, a| a.norm_sqr() > PRUNE);
    }

    /// XORs `f(branch)` into the register at position `target`. `f` must not
    /// read the target register, which keeps the map a permutation.
    pub fn xor_into(
        &mut self,
        target: usize,
        mut f: impl FnMut(&[Bits]) -> Bits,
    ) -> Result<(), Error> {
        let width = self.regs[target].1;
        let old = core::mem::take(&mut self.branches);
        let mut out = BTreeMap::new();
        for (mut k, a) in old {
            let v = f(&k);
            if v.len() != width {
                self.branches = out;
                return Err(Error::WidthMismatch {
                    expected: width,
                    found: v.len(),
                });
            }
            k[target].xor_assign(&v);
            *out.entry(k).or_insert(Complex::new(0.0, 0.0)) += a;
        }
        self.branches = out;
        Ok(())
    }

    /// Like [`SparseState::xor_into`] but `f` may fail on a branch.
    pub fn try_xor_into(
        &mut self,
        target: usize,
        mut f: impl FnMut(&[Bits]) -> Result<Bits, Error>,
    ) -> Result<(), Error> {
        let width = self.regs[target].1;
        let mut updates = Vec::with_capacity(self.branches.len());
        for k in self.branches.keys() {
            let v = f(k)?;
            if v.len() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    found: v.len(),
                });
            }
            updates.push(v);
        }
        let mut it = updates.into_iter();
        self.remap(|k| {
            let v = it.next().expect("one update per branch");
            k[target].xor_assign(&v);
        });
        Ok(())
    }

    pub fn apply_permutation(&mut self, reg: Reg, perm: &BitPermutation) -> Result<(), Error> {
        let p = self.position(reg)?;
        if perm.width() != self.regs[p].1 {
            return Err(Error::WidthMismatch {
                expected: self.regs[p].1,
                found: perm.width(),
            });
        }
        self.remap(|k| k[p] = perm.apply(&k[p]).expect("width checked"));
        Ok(())
    }

    /// Multiplies each amplitude by `exp(i * phase(value of reg))`.
    pub fn apply_phase(&mut self, reg: Reg, phase: impl Fn(&Bits) -> f64) -> Result<(), Error> {
        let p = self.position(reg)?;
        for (k, a) in self.branches.iter_mut() {
            *a *= Complex::from_polar(1.0, phase(&k[p]));
        }
        Ok(())
    }

    /// Multiplies each amplitude by `exp(i * phase(branch))`.
    pub fn apply_branch_phase(&mut self, phase: impl Fn(&[Bits]) -> f64) {
        for (k, a) in self.branches.iter_mut() {
            *a *= Complex::from_polar(1.0, phase(k));
        }
    }

    /// Renames registers simultaneously; labels not in `map` are kept.
    pub fn rename(&mut self, map: &[(Reg, Reg)]) {
        for (r, _) in self.regs.iter_mut() {
            if let Some((_, to)) = map.iter().find(|(from, _)| from == r) {
                *r = *to;
            }
        }
    }

    /// Concatenates `parts` (in order) into one register `new`, placed where
    /// the first part was.
    pub fn merge_registers(&mut self, parts: &[Reg], new: Reg) -> Result<(), Error> {
        let pos: Vec<usize> = parts
            .iter()
            .map(|r| self.position(*r))
            .collect::<Result<_, _>>()?;
        if self.contains(new) && !parts.contains(&new) {
            return Err(Error::DuplicateRegister(new));
        }
        let width: usize = pos.iter().map(|&p| self.regs[p].1).sum();
        let first = *pos.iter().min().ok_or(Error::Malformed("nothing to merge"))?;
        let keep: Vec<usize> = (0..self.regs.len()).filter(|i| !pos.contains(i)).collect();
        let mut regs = Vec::with_capacity(keep.len() + 1);
        let mut inserted = false;
        for i in 0..self.regs.len() {
            if i == first {
                regs.push((new, width));
                inserted = true;
            } else if keep.contains(&i) {
                regs.push(self.regs[i]);
            }
        }
        debug_assert!(inserted);
        self.regs = regs;
        self.remap(|k| {
            let merged = Bits::concat_all(pos.iter().map(|&p| &k[p]));
            let mut out = Vec::with_capacity(keep.len() + 1);
            for i in 0..k.len() {
                if i == first {
                    out.push(merged.clone());
                } else if keep.contains(&i) {
                    out.push(k[i].clone());
                }
            }
            *k = out;
        });
        Ok(())
    }

    /// Splits `reg` into consecutive slices named by `parts`.
    pub fn split_register(&mut self, reg: Reg, parts: &[(Reg, usize)]) -> Result<(), Error> {
        let p = self.position(reg)?;
        let total: usize = parts.iter().map(|(_, w)| w).sum();
        if total != self.regs[p].1 {
            return Err(Error::WidthMismatch {
                expected: self.regs[p].1,
                found: total,
            });
        }
        for (r, _) in parts {
            if *r != reg && self.contains(*r) {
                return Err(Error::DuplicateRegister(*r));
            }
        }
        self.regs.splice(p..p + 1, parts.iter().copied());
        self.remap(|k| {
            let v = k[p].clone();
            let mut start = 0;
            let pieces: Vec<Bits> = parts
                .iter()
                .map(|(_, w)| {
                    let s = v.slice(start, start + w);
                    start += w;
                    s
                })
                .collect();
            k.splice(p..p + 1, pieces);
        });
        Ok(())
    }

    /// Removes `reg` if the state is a product of it and the rest, returning
    /// the register's own state. Returns `None` when it is entangled.
    pub fn split_off(&mut self, reg: Reg) -> Result<Option<SparseState>, Error> {
        let p = self.position(reg)?;
        let mut groups: BTreeMap<Bits, BTreeMap<Vec<Bits>, Complex>> = BTreeMap::new();
        for (k, a) in &self.branches {
            let mut rest = k.clone();
            let v = rest.remove(p);
            groups.entry(v).or_default().insert(rest, *a);
        }
        let (_, g0) = groups.iter().next().ok_or(Error::ZeroNorm)?;
        let (b0, amp00) = g0.iter().next().map(|(b, a)| (b.clone(), *a)).ok_or(Error::ZeroNorm)?;
        if groups.len() * g0.len() != self.branches.len() {
            return Ok(None);
        }
        for g in groups.values() {
            if g.len() != g0.len() {
                return Ok(None);
            }
            let ab0 = match g.get(&b0) {
                Some(x) => *x,
                None => return Ok(None),
            };
            for (b, ab) in g {
                let a0b = match g0.get(b) {
                    Some(x) => *x,
                    None => return Ok(None),
                };
                let lhs = ab * amp00;
                let rhs = ab0 * a0b;
                let scale = (ab0.norm() * a0b.norm()).max(ab.norm() * amp00.norm());
                if (lhs - rhs).norm() > SPLIT_TOL * scale.max(1e-300) {
                    return Ok(None);
                }
            }
        }
        let phase = amp00.conj() / amp00.norm();
        let single = SparseState::from_branches(
            alloc::vec![self.regs[p]],
            groups.iter().map(|(a, g)| (alloc::vec![a.clone()], g[&b0])),
        )?;
        let rest_branches: Vec<(Vec<Bits>, Complex)> =
            g0.iter().map(|(b, a)| (b.clone(), a * phase)).collect();
        let mut regs = self.regs.clone();
        regs.remove(p);
        *self = SparseState::from_branches(regs, rest_branches)?;
        Ok(Some(single))
    }

    /// Drops a register that is not entangled with the rest.
    pub fn discard(&mut self, reg: Reg) -> Result<(), Error> {
        match self.split_off(reg)? {
            Some(_) => Ok(()),
            None => Err(Error::EntangledDiscard(reg)),
        }
    }

    /// Standard-basis measurement of `reg`; the register stays, collapsed.
    pub fn measure_computational<R: RngCore + ?Sized>(
        &mut self,
        reg: Reg,
        rng: &mut R,
    ) -> Result<Bits, Error> {
        let p = self.position(reg)?;
        let mut weights: BTreeMap<Bits, f64> = BTreeMap::new();
        for (k, a) in &self.branches {
            *weights.entry(k[p].clone()).or_insert(0.0) += a.norm_sqr();
        }
        let total: f64 = weights.values().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = None;
        for (v, w) in &weights {
            chosen = Some(v.clone());
            if u < *w {
                break;
            }
            u -= w;
        }
        let v = chosen.ok_or(Error::ZeroNorm)?;
        self.branches.retain(|k, _| k[p] == v);
        self.normalize()?;
        Ok(v)
    }

    /// Two-outcome projective measurement defined by a branch predicate.
    pub fn measure_predicate<R: RngCore + ?Sized>(
        &mut self,
        rng: &mut R,
        pred: impl Fn(&[Bits]) -> bool,
    ) -> Result<bool, Error> {
        let p1: f64 = self
            .branches
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let outcome = rng.gen::<f64>() * self.norm_sqr() < p1;
        self.branches.retain(|k, _| pred(k) == outcome);
        self.normalize()?;
        Ok(outcome)
    }

    /// Hadamard-basis measurement of every qubit of `reg`. The register is
    /// removed and each surviving branch picks up `(-1)^(d . s)` for its
    /// former value `s`.
    ///
    /// `d` is drawn exactly without enumerating `2^width` outcomes: the
    /// outcome probability depends on `d` only through its parities against
    /// a basis of the value differences, so we first draw that syndrome and
    /// then a uniform `d` with the syndrome.
    pub fn measure_hadamard<R: RngCore + ?Sized>(
        &mut self,
        reg: Reg,
        rng: &mut R,
    ) -> Result<Bits, Error> {
        let p = self.position(reg)?;
        let width = self.regs[p].1;
        let s1 = self
            .branches
            .keys()
            .next()
            .map(|k| k[p].clone())
            .ok_or(Error::ZeroNorm)?;

        // Reduced row echelon basis of {s ^ s1}: each row has a pivot column
        // that is zero in every other row.
        let mut basis: Vec<(Bits, usize)> = Vec::new();
        for k in self.branches.keys() {
            let mut v = k[p].xor(&s1);
            for (row, piv) in &basis {
                if v.get(*piv) {
                    v.xor_assign(row);
                }
            }
            if let Some(piv) = (0..width).find(|&i| v.get(i)) {
                for (row, _) in basis.iter_mut() {
                    if row.get(piv) {
                        row.xor_assign(&v);
                    }
                }
                basis.push((v, piv));
                if basis.len() > MAX_HADAMARD_RANK {
                    return Err(Error::RankTooLarge(basis.len()));
                }
            }
        }
        let rank = basis.len();

        // Group residual branches; coordinates of s ^ s1 are its pivot bits.
        let mut residual: BTreeMap<Vec<Bits>, Vec<(u32, Complex)>> = BTreeMap::new();
        for (k, a) in &self.branches {
            let diff = k[p].xor(&s1);
            let mut lambda = 0u32;
            for (j, (_, piv)) in basis.iter().enumerate() {
                if diff.get(*piv) {
                    lambda |= 1 << j;
                }
            }
            let mut rest = k.clone();
            rest.remove(p);
            residual.entry(rest).or_default().push((lambda, *a));
        }

        let weight = |c: u32| -> f64 {
            residual
                .values()
                .map(|terms| {
                    terms
                        .iter()
                        .map(|(l, a)| if (l & c).count_ones() % 2 == 1 { -a } else { *a })
                        .sum::<Complex>()
                        .norm_sqr()
                })
                .sum::<f64>()
        };
        let weights: Vec<f64> = (0..1u32 << rank).map(weight).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut syndrome = 0u32;
        for (c, w) in weights.iter().enumerate() {
            syndrome = c as u32;
            if u < *w {
                break;
            }
            u -= w;
        }

        let mut d = Bits::random(rng, width);
        for (_, piv) in &basis {
            d.set(*piv, false);
        }
        for (j, (row, piv)) in basis.iter().enumerate() {
            let want = (syndrome >> j) & 1 == 1;
            d.set(*piv, want ^ row.dot(&d));
        }

        let mut out: BTreeMap<Vec<Bits>, Complex> = BTreeMap::new();
        for (k, a) in &self.branches {
            let mut rest = k.clone();
            let s = rest.remove(p);
            let signed = if s.dot(&d) { -a } else { *a };
            *out.entry(rest).or_insert(Complex::new(0.0, 0.0)) += signed;
        }
        self.regs.remove(p);
        self.branches = out;
        self.normalize()?;
        Ok(d)
    }

    /// Reorders registers to `order`, which must name exactly this state's
    /// registers.
    pub fn reorder(&mut self, order: &[Reg]) -> Result<(), Error> {
        if order.len() != self.regs.len() {
            return Err(Error::Malformed("reorder must list every register once"));
        }
        let idx: Vec<usize> = order
            .iter()
            .map(|r| self.position(*r))
            .collect::<Result<_, _>>()?;
        self.regs = idx.iter().map(|&i| self.regs[i]).collect();
        self.remap(|k| *k = idx.iter().map(|&i| k[i].clone()).collect());
        Ok(())
    }

    /// `|<expected|self>|^2`, matching registers by label.
    pub fn fidelity(&self, expected: &SparseState) -> Result<f64, Error> {
        let mut e = expected.clone();
        let order: Vec<Reg> = self.regs.iter().map(|(r, _)| *r).collect();
        e.reorder(&order)?;
        for ((_, a), (_, b)) in self.regs.iter().zip(&e.regs) {
            if a != b {
                return Err(Error::WidthMismatch {
                    expected: *b,
                    found: *a,
                });
            }
        }
        let inner: Complex = e
            .branches
            .iter()
            .map(|(k, a)| a.conj() * self.amplitude(k))
            .sum();
        Ok(inner.norm_sqr() / (self.norm_sqr() * e.norm_sqr()))
    }

    /// Sorted text dump, one branch per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let names: Vec<String> = self.regs.iter().map(|(r, w)| alloc::format!("r{}:{}", r.0, w)).collect();
        let _ = writeln!(s, "# {}", names.join(" "));
        for (k, a) in &self.branches {
            let vals: Vec<String> = k.iter().map(|b| alloc::format!("{b}")).collect();
            let _ = writeln!(s, "{} {:+.12} {:+.12}", vals.join(" "), a.re, a.im);
        }
        s
    }
}

/// Product-form server memory.
#[derive(Clone, Debug, Default)]
pub struct ServerMemory {
    factors: Vec<SparseState>,
}

impl ServerMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factors(&self) -> &[SparseState] {
        &self.factors
    }

    pub fn contains(&self, reg: Reg) -> bool {
        self.factors.iter().any(|f| f.contains(reg))
    }

    pub fn registers(&self) -> Vec<(Reg, usize)> {
        let mut v: Vec<(Reg, usize)> = self
            .factors
            .iter()
            .flat_map(|f| f.registers().iter().copied())
            .collect();
        v.sort();
        v
    }

    pub fn width(&self, reg: Reg) -> Result<usize, Error> {
        self.factor_of(reg).and_then(|i| self.factors[i].width(reg))
    }

    pub fn max_branches(&self) -> usize {
        self.factors.iter().map(|f| f.num_branches()).max().unwrap_or(1)
    }

    pub fn insert(&mut self, state: SparseState) -> Result<(), Error> {
        for (r, _) in state.registers() {
            if self.contains(*r) {
                return Err(Error::DuplicateRegister(*r));
            }
        }
        self.factors.push(state);
        Ok(())
    }

    pub fn insert_basis(&mut self, reg: Reg, value: Bits) -> Result<(), Error> {
        self.insert(SparseState::basis(reg, value))
    }

    fn factor_of(&self, reg: Reg) -> Result<usize, Error> {
        self.factors
            .iter()
            .position(|f| f.contains(reg))
            .ok_or(Error::UnknownRegister(reg))
    }

    /// Merges the factors holding `regs` into one and returns its index.
    fn gather(&mut self, regs: &[Reg]) -> Result<usize, Error> {
        let mut idx: Vec<usize> = regs.iter().map(|r| self.factor_of(*r)).collect::<Result<_, _>>()?;
        idx.sort_unstable();
        idx.dedup();
        if idx.len() == 1 {
            return Ok(idx[0]);
        }
        let mut merged = SparseState::new();
        for &i in idx.iter().rev() {
            let f = self.factors.swap_remove(i);
            merged = f.tensor(&merged)?;
        }
        self.factors.push(merged);
        Ok(self.factors.len() - 1)
    }

    /// Runs `f` on a factor containing all of `regs`, then splits off any
    /// register that ended up unentangled.
    pub fn with<T>(
        &mut self,
        regs: &[Reg],
        f: impl FnOnce(&mut SparseState) -> Result<T, Error>,
    ) -> Result<T, Error> {
        let i = self.gather(regs)?;
        let out = f(&mut self.factors[i])?;
        self.tidy_factor(i)?;
        Ok(out)
    }

    fn tidy_factor(&mut self, i: usize) -> Result<(), Error> {
        let mut pending = alloc::vec![self.factors.swap_remove(i)];
        while let Some(mut f) = pending.pop() {
            if f.registers().is_empty() {
                continue;
            }
            let mut peeled = false;
            if f.registers().len() > 1 {
                let regs: Vec<Reg> = f.registers().iter().map(|(r, _)| *r).collect();
                for r in regs {
                    if let Some(single) = f.split_off(r)? {
                        self.factors.push(single);
                        peeled = true;
                        break;
                    }
                }
            }
            if peeled {
                pending.push(f);
            } else {
                self.factors.push(f);
            }
        }
        Ok(())
    }

    pub fn tidy(&mut self) -> Result<(), Error> {
        let n = self.factors.len();
        for i in (0..n).rev() {
            self.tidy_factor(i)?;
        }
        Ok(())
    }

    /// Renames registers simultaneously. Every source must exist and the
    /// resulting labels must be distinct.
    pub fn rename(&mut self, map: &[(Reg, Reg)]) -> Result<(), Error> {
        for (from, _) in map {
            self.factor_of(*from)?;
        }
        let mut next = self.clone();
        for f in next.factors.iter_mut() {
            f.rename(map);
        }
        let regs = next.registers();
        if let Some(w) = regs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateRegister(w[0].0));
        }
        *self = next;
        Ok(())
    }

    pub fn discard(&mut self, reg: Reg) -> Result<(), Error> {
        let i = self.factor_of(reg)?;
        self.factors[i].discard(reg)?;
        if self.factors[i].registers().is_empty() {
            self.factors.swap_remove(i);
        }
        Ok(())
    }

    pub fn measure_hadamard<R: RngCore + ?Sized>(&mut self, reg: Reg, rng: &mut R) -> Result<Bits, Error> {
        self.with(&[reg], |s| s.measure_hadamard(reg, rng))
    }

    pub fn measure_computational<R: RngCore + ?Sized>(
        &mut self,
        reg: Reg,
        rng: &mut R,
    ) -> Result<Bits, Error> {
        self.with(&[reg], |s| s.measure_computational(reg, rng))
    }

    /// The joint state of every factor touching `regs`, cloned.
    pub fn state_of(&self, regs: &[Reg]) -> Result<SparseState, Error> {
        let mut idx: Vec<usize> = regs.iter().map(|r| self.factor_of(*r)).collect::<Result<_, _>>()?;
        idx.sort_unstable();
        idx.dedup();
        let mut s = SparseState::new();
        for i in idx {
            s = s.tensor(&self.factors[i])?;
        }
        Ok(s)
    }

    /// Fidelity of the memory with `Gadget(K)` on the named registers. Any
    /// other register sharing a factor with them counts as a mismatch.
    pub fn gadget_fidelity(&self, targets: &[(Reg, &KeyPair)]) -> Result<f64, Error> {
        let mut by_factor: BTreeMap<usize, Vec<(Reg, &KeyPair)>> = BTreeMap::new();
        for (r, k) in targets {
            by_factor.entry(self.factor_of(*r)?).or_default().push((*r, *k));
        }
        let mut f = 1.0;
        for (i, group) in by_factor {
            let factor = &self.factors[i];
            if factor.registers().len() != group.len() {
                return Ok(0.0);
            }
            let mut expected = SparseState::new();
            for (r, k) in &group {
                expected = expected.tensor(&SparseState::gadget(*r, k))?;
            }
            f *= factor.fidelity(&expected)?;
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(a: &str, b: &str) -> KeyPair {
        KeyPair::new(bits(a), bits(b)).unwrap()
    }

    const H: f64 = core::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn gadget_branches() {
        let g = SparseState::gadget(Reg(0), &pair("0", "1"));
        assert_eq!(g.num_branches(), 2);
        assert!((g.amplitude(&[bits("0")]).re - H).abs() < 1e-12);
        let t = g.tensor(&SparseState::gadget(Reg(1), &pair("00", "11"))).unwrap();
        assert_eq!(t.num_branches(), 4);
        for (_, a) in t.branches() {
            assert!((a.re - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn computational_measurement_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut zeros = 0;
        for _ in 0..2000 {
            let mut g = SparseState::gadget(Reg(0), &pair("01", "10"));
            let v = g.measure_computational(Reg(0), &mut rng).unwrap();
            assert!((g.norm_sqr() - 1.0).abs() < 1e-9);
            assert_eq!(g.num_branches(), 1);
            zeros += (v == bits("01")) as usize;
        }
        assert!((zeros as f64 / 2000.0 - 0.5).abs() < 0.03);
        let mut b = SparseState::basis(Reg(0), bits("101"));
        assert_eq!(b.measure_computational(Reg(0), &mut rng).unwrap(), bits("101"));
    }

    #[test]
    fn hadamard_measurement_respects_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = pair("00", "11");
        for _ in 0..200 {
            let mut g = SparseState::gadget(Reg(0), &k);
            let d = g.measure_hadamard(Reg(0), &mut rng).unwrap();
            assert!(d == bits("00") || d == bits("11"));
            assert!(g.registers().is_empty());
            assert!((g.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hadamard_residual_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, y) = (Reg(0), Reg(1));
        let (y0, y1) = (bits("0110"), bits("1011"));
        let theta = 0.7;
        for _ in 0..50 {
            let mut s = SparseState::from_branches(
                alloc::vec![(b, 1), (y, 4)],
                [
                    (alloc::vec![bits("0"), y0.clone()], Complex::new(H, 0.0)),
                    (alloc::vec![bits("1"), y1.clone()], Complex::from_polar(H, theta)),
                ],
            )
            .unwrap();
            let d = s.measure_hadamard(y, &mut rng).unwrap();
            let extra = if d.dot(&y0.xor(&y1)) { core::f64::consts::PI } else { 0.0 };
            let expected = SparseState::from_branches(
                alloc::vec![(b, 1)],
                [
                    (alloc::vec![bits("0")], Complex::new(1.0, 0.0)),
                    (alloc::vec![bits("1")], Complex::from_polar(1.0, theta + extra)),
                ],
            )
            .unwrap();
            assert!((s.fidelity(&expected).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_and_phase() {
        let mut g = SparseState::gadget(Reg(0), &pair("01", "10"));
        let before = g.clone();
        let swap = BitPermutation::new(alloc::vec![1, 0]).unwrap();
        g.apply_permutation(Reg(0), &swap).unwrap();
        assert!((g.fidelity(&before).unwrap() - 1.0).abs() < 1e-12);
        g.apply_phase(Reg(0), |_| 1.3).unwrap();
        assert!((g.fidelity(&before).unwrap() - 1.0).abs() < 1e-12);
        let mut h = before.clone();
        h.apply_phase(Reg(0), |v| if *v == bits("10") { core::f64::consts::PI } else { 0.0 })
            .unwrap();
        assert!(h.fidelity(&before).unwrap() < 1e-12);
        let mut a = before.clone();
        a.apply_phase(Reg(0), |v| if *v == bits("10") { 0.4 } else { 0.0 }).unwrap();
        a.apply_phase(Reg(0), |v| if *v == bits("10") { 0.4 } else { 0.0 }).unwrap();
        let mut b2 = before.clone();
        b2.apply_phase(Reg(0), |v| if *v == bits("10") { 0.8 } else { 0.0 }).unwrap();
        assert!((a.fidelity(&b2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merge_split_discard() {
        let g = SparseState::gadget(Reg(0), &pair("01", "10"));
        let mut t = g.tensor(&SparseState::basis(Reg(1), bits("111"))).unwrap();
        let before = t.clone();
        t.merge_registers(&[Reg(0), Reg(1)], Reg(2)).unwrap();
        assert_eq!(t.width(Reg(2)).unwrap(), 5);
        t.split_register(Reg(2), &[(Reg(0), 2), (Reg(1), 3)]).unwrap();
        assert!((t.fidelity(&before).unwrap() - 1.0).abs() < 1e-12);
        t.discard(Reg(1)).unwrap();
        assert!((t.norm_sqr() - 1.0).abs() < 1e-12);

        let mut ent = SparseState::from_branches(
            alloc::vec![(Reg(0), 1), (Reg(1), 1)],
            [
                (alloc::vec![bits("0"), bits("0")], Complex::new(1.0, 0.0)),
                (alloc::vec![bits("1"), bits("1")], Complex::new(1.0, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(ent.discard(Reg(1)), Err(Error::EntangledDiscard(Reg(1))));
    }

    #[test]
    fn fidelity_basics() {
        let p = SparseState::gadget(Reg(0), &pair("0", "1"));
        assert!((p.fidelity(&p).unwrap() - 1.0).abs() < 1e-12);
        let z = SparseState::basis(Reg(0), bits("0"));
        let o = SparseState::basis(Reg(0), bits("1"));
        assert!(z.fidelity(&o).unwrap() < 1e-12);
    }

    #[test]
    fn memory_merges_and_peels() {
        let mut m = ServerMemory::new();
        m.insert(SparseState::gadget(Reg(0), &pair("01", "10"))).unwrap();
        m.insert(SparseState::gadget(Reg(1), &pair("00", "11"))).unwrap();
        m.insert_basis(Reg(2), Bits::zeros(2)).unwrap();
        // CNOT-like: copy reg 0 into reg 2, then undo.
        m.with(&[Reg(0), Reg(2)], |s| {
            let p0 = s.position(Reg(0))?;
            let p2 = s.position(Reg(2))?;
            s.xor_into(p2, |v| v[p0].clone())
        })
        .unwrap();
        assert_eq!(m.factors().len(), 2);
        m.with(&[Reg(0), Reg(2)], |s| {
            let p0 = s.position(Reg(0))?;
            let p2 = s.position(Reg(2))?;
            s.xor_into(p2, |v| v[p0].clone())
        })
        .unwrap();
        assert_eq!(m.factors().len(), 3);
        m.discard(Reg(2)).unwrap();
        let k0 = pair("01", "10");
        let k1 = pair("00", "11");
        let f = m.gadget_fidelity(&[(Reg(0), &k0), (Reg(1), &k1)]).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_is_sorted_text() {
        let g = SparseState::gadget(Reg(3), &pair("1", "0"));
        let d = g.dump();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "# r3:1");
        assert!(lines[1].starts_with("0 "));
        assert!(lines[2].starts_with("1 "));
    }
}
