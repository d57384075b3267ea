use std::collections::VecDeque;

use num_traits::Float;

use super::{EnvState, Pos};

pub type Color = [u8; 3];

pub const COLOR_EMPTY: Color = [0, 0, 0];
pub const COLOR_OBSTACLE: Color = [128, 128, 128];
pub const COLOR_PREY: Color = [255, 0, 0];
pub const COLOR_OTHER: Color = [0, 255, 0];
pub const COLOR_SELF: Color = [0, 0, 255];

/// Number of frames stacked into one observation.
pub const FRAME_STACK: usize = 3;

/// One RGB image of the grid, one pixel per cell, row-major `height × width × 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, p: Pos) -> Color {
        let i = (p.y as usize * self.width + p.x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, p: Pos, c: Color) {
        let i = (p.y as usize * self.width + p.x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn count(&self, c: Color) -> usize {
        self.data.chunks_exact(3).filter(|px| *px == c).count()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }
}

/// Renders the grid as seen by predator `viewer`.
///
/// Draw order on shared cells is obstacle < prey < other predator < viewer,
/// so a viewer standing on another predator hides it.
pub fn render(state: &EnvState, viewer: usize) -> Frame {
    assert!(viewer < state.num_predators(), "viewer {viewer} is not a predator");
    let map = state.map();
    let mut frame = Frame::new(map.width(), map.height());
    for p in map.obstacles() {
        frame.set_pixel(p, COLOR_OBSTACLE);
    }
    frame.set_pixel(state.prey(), COLOR_PREY);
    for (i, &p) in state.predators().iter().enumerate() {
        if i != viewer {
            frame.set_pixel(p, COLOR_OTHER);
        }
    }
    frame.set_pixel(state.predators()[viewer], COLOR_SELF);
    frame
}

/// Cell codes for streaming: 0 empty, 1 obstacle, 2 prey, 3 + i predator i.
/// Overlapping agents resolve to the highest code.
pub fn grid_codes(state: &EnvState) -> Vec<Vec<u8>> {
    let map = state.map();
    let mut grid = vec![vec![0u8; map.width()]; map.height()];
    for p in map.obstacles() {
        grid[p.y as usize][p.x as usize] = 1;
    }
    let mut mark = |p: Pos, code: u8| {
        let cell = &mut grid[p.y as usize][p.x as usize];
        *cell = (*cell).max(code);
    };
    mark(state.prey(), 2);
    for (i, &p) in state.predators().iter().enumerate() {
        mark(p, 3 + i as u8);
    }
    grid
}

/// Three stacked frames, oldest first, as a `height × width × 9` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Observation {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        FRAME_STACK * 3
    }

    /// Raw channel values, interleaved per pixel.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Writes the channels divided by 255 into `out`.
    pub fn write_rescaled<T: Float>(&self, out: &mut [T]) {
        let scale = T::from(255.0).unwrap();
        for (o, &b) in out.iter_mut().zip(&self.data) {
            *o = T::from(b).unwrap() / scale;
        }
    }

    pub fn rescaled<T: Float>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.data.len()];
        self.write_rescaled(&mut out);
        out
    }

    /// Frame `k` of the stack (0 = oldest).
    pub fn frame(&self, k: usize) -> Frame {
        let mut f = Frame::new(self.width, self.height);
        for (px, dst) in self.data.chunks_exact(9).zip(f.data.chunks_exact_mut(3)) {
            dst.copy_from_slice(&px[k * 3..k * 3 + 3]);
        }
        f
    }
}

/// Stacks up to the last three frames, padding with the earliest one.
pub fn observe(history: &[Frame]) -> Observation {
    assert!(!history.is_empty(), "observe needs at least one frame");
    let recent = &history[history.len().saturating_sub(FRAME_STACK)..];
    let pad = FRAME_STACK - recent.len();
    let stack: Vec<&Frame> = std::iter::repeat_n(&recent[0], pad).chain(recent).collect();
    let (width, height) = (recent[0].width, recent[0].height);
    let mut data = Vec::with_capacity(width * height * 9);
    for cell in 0..width * height {
        for f in &stack {
            data.extend_from_slice(&f.data[cell * 3..cell * 3 + 3]);
        }
    }
    Observation {
        width,
        height,
        data,
    }
}

/// Rolling window of a single viewer's most recent frames.
#[derive(Debug, Clone, Default)]
pub struct FrameHistory {
    frames: VecDeque<Frame>,
}

impl FrameHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, frame: Frame) {
        if self.frames.len() == FRAME_STACK {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn observe(&self) -> Observation {
        let frames: Vec<Frame> = self.frames.iter().cloned().collect();
        observe(&frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, GridMap};

    fn state(predators: &[(i32, i32)], prey: (i32, i32)) -> EnvState {
        let map = GridMap::canonical();
        EnvState::from_positions(
            &map,
            predators.iter().map(|&(x, y)| Pos::new(x, y)).collect(),
            Pos::new(prey.0, prey.1),
            0,
            EnvConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn viewer_hides_co_located_predator() {
        let s = state(&[(1, 1), (1, 1)], (8, 8));
        let f = render(&s, 0);
        assert_eq!(f.pixel(Pos::new(1, 1)), COLOR_SELF);
        assert_eq!(f.count(COLOR_OTHER), 0);
    }

    #[test]
    fn color_counts() {
        let s = state(&[(1, 1), (6, 7)], (8, 8));
        let f = render(&s, 1);
        assert_eq!(f.count(COLOR_PREY), 1);
        assert_eq!(f.count(COLOR_SELF), 1);
        assert_eq!(f.count(COLOR_OTHER), 1);
        assert_eq!(f.pixel(Pos::new(6, 7)), COLOR_SELF);
        assert_eq!(f.count(COLOR_OBSTACLE), s.map().obstacles().count());
        let s3 = state(&[(1, 1), (6, 7), (14, 14)], (8, 8));
        assert_eq!(render(&s3, 0).count(COLOR_OTHER), 2);
    }

    #[test]
    fn every_pixel_is_canonical() {
        let s = state(&[(1, 1), (6, 7), (8, 8)], (8, 8));
        let f = render(&s, 2);
        let palette = [COLOR_EMPTY, COLOR_OBSTACLE, COLOR_PREY, COLOR_OTHER, COLOR_SELF];
        assert!(f.as_bytes().chunks_exact(3).all(|px| palette.iter().any(|c| c == px)));
        // predator 2 sits on the prey
        assert_eq!(f.pixel(Pos::new(8, 8)), COLOR_SELF);
    }

    #[test]
    fn grid_codes_take_highest() {
        let s = state(&[(8, 8), (8, 8)], (8, 8));
        let g = grid_codes(&s);
        assert_eq!(g[8][8], 4);
        assert_eq!(g[2][2], 1);
        assert_eq!(g[0][0], 0);
    }

    #[test]
    fn stacking_pads_with_duplicates() {
        let a = render(&state(&[(1, 1), (6, 6)], (8, 8)), 0);
        let b = render(&state(&[(1, 2), (6, 6)], (8, 8)), 0);
        let c = render(&state(&[(1, 3), (6, 6)], (8, 8)), 0);

        let o = observe(std::slice::from_ref(&a));
        assert_eq!(o.channels(), 9);
        assert_eq!((o.frame(0), o.frame(1), o.frame(2)), (a.clone(), a.clone(), a.clone()));

        let o = observe(&[a.clone(), b.clone()]);
        assert_eq!((o.frame(0), o.frame(1), o.frame(2)), (a.clone(), a.clone(), b.clone()));

        let mut h = FrameHistory::new();
        for f in [a.clone(), a.clone(), b.clone(), c.clone()] {
            h.push(f);
        }
        let o = h.observe();
        assert_eq!((o.frame(0), o.frame(1), o.frame(2)), (a, b, c));
    }

    #[test]
    fn rescaling_maps_to_unit_interval() {
        let f = render(&state(&[(1, 1), (6, 6)], (8, 8)), 0);
        let o = observe(&[f]);
        let r: Vec<f32> = o.rescaled();
        assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // prey pixel red channel
        let i = (8 * 16 + 8) * 9;
        assert_eq!(o.as_bytes()[i], 255);
        assert_eq!(r[i], 1.0);
        assert_eq!(r[i + 1], 0.0);
    }
}
