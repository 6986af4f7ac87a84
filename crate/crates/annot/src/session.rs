//! Annotation session state: working quad, step size and undo history.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use woftsam_core::geometry::{Point2, Quad};

/// Step size is `2^k` px with `k` in this range.
pub const MIN_STEP_EXP: i32 = -6;
pub const MAX_STEP_EXP: i32 = 6;

/// Offsets are counted in units of the smallest step so that a nudge and
/// its opposite cancel exactly.
const UNIT: f64 = 1.0 / 64.0;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("corner index {0} is not in 0..=3")]
    InvalidCorner(usize),
    #[error("reference frame {0} is outside the sequence")]
    InvalidReference(usize),
    #[error("corner position must be finite")]
    NonFinite,
    #[error("nothing to undo")]
    NothingToUndo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Unit offset in image coordinates (y down).
    fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepOp {
    Double,
    Halve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Corner {
    anchor: Point2,
    /// offset from the anchor in units of 2^-6 px
    dx: i64,
    dy: i64,
}

impl Corner {
    fn at(p: Point2) -> Self {
        Self { anchor: p, dx: 0, dy: 0 }
    }

    fn position(&self) -> Point2 {
        Point2::new(self.anchor.x + self.dx as f64 * UNIT, self.anchor.y + self.dy as f64 * UNIT)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Snapshot {
    corners: [Corner; 4],
    step_exp: i32,
    reference: usize,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub sequence: String,
    frames: usize,
    state: Snapshot,
    undo: Vec<Snapshot>,
}

/// JSON view returned by every session endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub sequence: String,
    pub quad: [f64; 8],
    pub step: f64,
    pub reference: usize,
    pub undo_depth: usize,
}

impl Session {
    pub fn new(id: String, sequence: String, quad: Quad, reference: usize, frames: usize) -> Result<Self, SessionError> {
        if reference >= frames {
            return Err(SessionError::InvalidReference(reference));
        }
        Ok(Self {
            id,
            sequence,
            frames,
            state: Snapshot {
                corners: quad.points.map(Corner::at),
                step_exp: 0,
                reference,
            },
            undo: Vec::new(),
        })
    }

    pub fn quad(&self) -> Quad {
        Quad::new(self.state.corners.map(|c| c.position()))
    }

    pub fn step(&self) -> f64 {
        2f64.powi(self.state.step_exp)
    }

    pub fn reference(&self) -> usize {
        self.state.reference
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            sequence: self.sequence.clone(),
            quad: self.quad().to_flat(),
            step: self.step(),
            reference: self.state.reference,
            undo_depth: self.undo.len(),
        }
    }

    fn mutate(&mut self, f: impl FnOnce(&mut Snapshot)) {
        self.undo.push(self.state.clone());
        f(&mut self.state);
    }

    /// Moves one corner by the current step.
    pub fn nudge(&mut self, corner: usize, dir: Direction) -> Result<(), SessionError> {
        if corner > 3 {
            return Err(SessionError::InvalidCorner(corner));
        }
        let units = 1i64 << (self.state.step_exp - MIN_STEP_EXP);
        let (ux, uy) = dir.delta();
        self.mutate(|s| {
            s.corners[corner].dx += ux * units;
            s.corners[corner].dy += uy * units;
        });
        Ok(())
    }

    /// Places a corner at an absolute position (drag).
    pub fn set_corner(&mut self, corner: usize, p: Point2) -> Result<(), SessionError> {
        if corner > 3 {
            return Err(SessionError::InvalidCorner(corner));
        }
        if !p.is_finite() {
            return Err(SessionError::NonFinite);
        }
        self.mutate(|s| s.corners[corner] = Corner::at(p));
        Ok(())
    }

    /// Doubles or halves the step, clamped to `[2^-6, 2^6]`.
    pub fn apply_step(&mut self, op: StepOp) {
        let k = match op {
            StepOp::Double => (self.state.step_exp + 1).min(MAX_STEP_EXP),
            StepOp::Halve => (self.state.step_exp - 1).max(MIN_STEP_EXP),
        };
        self.mutate(|s| s.step_exp = k);
    }

    pub fn set_reference(&mut self, t: usize) -> Result<(), SessionError> {
        if t >= self.frames {
            return Err(SessionError::InvalidReference(t));
        }
        self.mutate(|s| s.reference = t);
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), SessionError> {
        self.state = self.undo.pop().ok_or(SessionError::NothingToUndo)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session() -> Session {
        let q = Quad::from_flat([10.1, 20.3, 110.7, 19.9, 111.3, 95.05, 9.77, 96.2]);
        Session::new("s".into(), "seq".into(), q, 0, 10).unwrap()
    }

    #[test]
    fn nudge_right_moves_one_pixel() {
        let mut s = session();
        s.nudge(0, Direction::Right).unwrap();
        assert_eq!(s.quad().points[0].x, 11.1);
        assert_eq!(s.quad().points[0].y, 20.3);
    }

    #[test]
    fn double_double_up_moves_four() {
        let mut s = session();
        s.apply_step(StepOp::Double);
        s.apply_step(StepOp::Double);
        s.nudge(2, Direction::Up).unwrap();
        assert_eq!(s.step(), 4.0);
        assert_eq!(s.quad().points[2].y, 95.05 - 4.0);
    }

    #[test]
    fn step_is_clamped() {
        let mut s = session();
        for _ in 0..6 {
            s.apply_step(StepOp::Halve);
        }
        assert_eq!(s.step(), 1.0 / 64.0);
        s.apply_step(StepOp::Halve);
        assert_eq!(s.step(), 1.0 / 64.0);
        for _ in 0..20 {
            s.apply_step(StepOp::Double);
        }
        assert_eq!(s.step(), 64.0);
    }

    #[test]
    fn bad_corner_is_rejected_without_history() {
        let mut s = session();
        assert_eq!(s.nudge(4, Direction::Up), Err(SessionError::InvalidCorner(4)));
        assert_eq!(s.undo_depth(), 0);
        assert_eq!(s.undo(), Err(SessionError::NothingToUndo));
        assert_eq!(s.set_reference(10), Err(SessionError::InvalidReference(10)));
    }

    fn op() -> impl Strategy<Value = (u8, usize, Direction)> {
        let dir = prop_oneof![Just(Direction::Up), Just(Direction::Down), Just(Direction::Left), Just(Direction::Right)];
        (0u8..3, 0usize..4, dir)
    }

    proptest! {
        #[test]
        fn nudge_then_opposite_is_identity(ops in proptest::collection::vec(op(), 0..40), corner in 0usize..4, d in 0usize..4, k in 0usize..13) {
            let mut s = session();
            for (kind, c, dir) in ops {
                match kind {
                    0 => s.nudge(c, dir).unwrap(),
                    1 => s.apply_step(StepOp::Double),
                    _ => s.apply_step(StepOp::Halve),
                }
            }
            s.state.step_exp = MIN_STEP_EXP + k as i32;
            let before = s.quad();
            let dir = [Direction::Up, Direction::Down, Direction::Left, Direction::Right][d];
            s.nudge(corner, dir).unwrap();
            s.nudge(corner, dir.opposite()).unwrap();
            prop_assert_eq!(s.quad().to_flat().map(f64::to_bits), before.to_flat().map(f64::to_bits));
        }

        #[test]
        fn undo_depth_counts_mutations(ops in proptest::collection::vec(op(), 0..40)) {
            let mut s = session();
            let mut states = vec![s.view()];
            for (kind, c, dir) in &ops {
                match kind {
                    0 => s.nudge(*c, *dir).unwrap(),
                    1 => s.apply_step(StepOp::Double),
                    _ => s.set_corner(*c, Point2::new(*c as f64, 3.5)).unwrap(),
                }
                states.push(s.view());
            }
            prop_assert_eq!(s.undo_depth(), ops.len());
            while let Some(want) = states.pop() {
                let mut got = s.view();
                got.undo_depth = want.undo_depth;
                prop_assert_eq!(got, want);
                if !states.is_empty() {
                    s.undo().unwrap();
                }
            }
        }
    }
}
