//! Scenes stored as merklefs trees, rendered to a character grid.
//!
//! Every element is a directory. Its attributes are small files inside it
//! (`kind`, `x`, `y`, `w`, `h`, `label`, `layout`), its children are its
//! subdirectories and its event receptors are receptor entries. Children are
//! drawn in name order, so a later sibling covers an earlier one, and are
//! clipped to the parent's content area.
//!
//! The scene root is the canvas. It may carry `w`/`h` (otherwise it is sized
//! to fit its children) and may itself have a `kind`.
//!
//! Rendered fragments and event-map fragments are cached by the manifest id
//! of the element's directory, so a subtree that has been rendered before,
//! anywhere, is copied instead of re-rendered. `render_calls` counts those
//! cache misses below the root; composing the canvas itself is not counted.

mod text;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::castore::BlockId;
use crate::merklefs::{EntryKind, FsError, Manifest, MerkleFs, TreeHandle, VersionStamp};

pub use text::{import_scene, parse_scene, SceneLine};

/// Attribute file names; child elements may not use them.
pub const ATTRIBUTES: [&str; 7] = ["kind", "x", "y", "w", "h", "label", "layout"];

/// Upper bound on any width or height attribute.
pub const MAX_DIM: u32 = 1024;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("bad attribute {path}: {msg}")]
    Attr { path: String, msg: String },
    #[error("scene description line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no event receptor at ({x}, {y})")]
    NoTarget { x: u32, y: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Window,
    Text,
    Button,
    Image,
    Pane,
}

impl ElementKind {
    pub const ALL: [ElementKind; 5] = [
        ElementKind::Window,
        ElementKind::Text,
        ElementKind::Button,
        ElementKind::Image,
        ElementKind::Pane,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Window => "window",
            ElementKind::Text => "text",
            ElementKind::Button => "button",
            ElementKind::Image => "image",
            ElementKind::Pane => "pane",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Automatic placement of children; their `x`/`y` are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Row,
    Column,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x - self.x < self.w && y - self.y < self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    fn offset(self, dx: u32, dy: u32) -> Rect {
        Rect {
            x: self.x.saturating_add(dx),
            y: self.y.saturating_add(dy),
            ..self
        }
    }

    fn intersect(self, o: Rect) -> Rect {
        let x0 = self.x.max(o.x);
        let y0 = self.y.max(o.y);
        let x1 = (self.x as u64 + self.w as u64).min(o.x as u64 + o.w as u64);
        let y1 = (self.y as u64 + self.h as u64).min(o.y as u64 + o.h as u64);
        Rect {
            x: x0,
            y: y0,
            w: (x1.saturating_sub(x0 as u64)) as u32,
            h: (y1.saturating_sub(y0 as u64)) as u32,
        }
    }
}

/// Decoded attributes of one element. `kind` is `None` only for a bare canvas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Element {
    pub kind: Option<ElementKind>,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: String,
    pub layout: Option<Layout>,
}

/// A rectangle of cells; `None` is transparent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub w: u32,
    pub h: u32,
    pub cells: Vec<Option<char>>,
}

impl Fragment {
    pub fn blank(w: u32, h: u32, fill: Option<char>) -> Self {
        Fragment {
            w,
            h,
            cells: vec![fill; w as usize * h as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Option<char> {
        self.cells[(y * self.w + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: char) {
        if x < self.w && y < self.h {
            self.cells[(y * self.w + x) as usize] = Some(c);
        }
    }

    /// Writes `s` from (x, y) rightwards, clipped at the right edge.
    pub fn put_str(&mut self, x: u32, y: u32, s: &str) {
        for (i, c) in s.chars().enumerate() {
            self.set(x.saturating_add(i as u32), y, c);
        }
    }

    /// Draws `src` with its origin at (x, y), skipping transparent cells and
    /// anything outside `clip`.
    fn blit(&mut self, src: &Fragment, x: u32, y: u32, clip: Rect) {
        let area = Rect::new(x, y, src.w, src.h)
            .intersect(clip)
            .intersect(Rect::new(0, 0, self.w, self.h));
        for cy in area.y..area.y + area.h {
            for cx in area.x..area.x + area.w {
                if let Some(c) = src.get(cx - x, cy - y) {
                    self.cells[(cy * self.w + cx) as usize] = Some(c);
                }
            }
        }
    }
}

/// Final rendered canvas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub w: u32,
    pub h: u32,
    rows: Vec<String>,
}

impl Grid {
    fn from_fragment(f: &Fragment) -> Self {
        let rows = (0..f.h).map(|y| (0..f.w).map(|x| f.get(x, y).unwrap_or(' ')).collect()).collect();
        Grid { w: f.w, h: f.h, rows }
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn char_at(&self, x: u32, y: u32) -> Option<char> {
        self.rows.get(y as usize)?.chars().nth(x as usize)
    }
}

/// One line per row, each terminated by LF.
impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Turns one element into cells. Composition of children is done by the
/// caller inside [`Renderer::content_rect`].
pub trait Renderer: Send + Sync {
    /// The element's own appearance, `w` by `h`, before children.
    fn draw(&self, el: &Element) -> Fragment;
    /// Where children are placed and clipped, in the element's coordinates.
    fn content_rect(&self, el: &Element) -> Rect;
}

/// Plain monospace text renderer.
#[derive(Clone, Copy, Debug, Default)]
pub struct TextRenderer;

fn printable(c: char) -> char {
    if c.is_control() {
        '?'
    } else {
        c
    }
}

impl Renderer for TextRenderer {
    fn draw(&self, el: &Element) -> Fragment {
        let (w, h) = (el.w, el.h);
        let label: String = el.label.chars().map(|c| if c == '\n' { c } else { printable(c) }).collect();
        match el.kind {
            None | Some(ElementKind::Pane) => Fragment::blank(w, h, None),
            Some(ElementKind::Window) => {
                let mut f = Fragment::blank(w, h, Some(' '));
                if w >= 2 && h >= 2 {
                    for x in 0..w {
                        f.set(x, 0, '-');
                        f.set(x, h - 1, '-');
                    }
                    for y in 0..h {
                        f.set(0, y, '|');
                        f.set(w - 1, y, '|');
                    }
                    for (x, y) in [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)] {
                        f.set(x, y, '+');
                    }
                    let title: String = label
                        .lines()
                        .next()
                        .unwrap_or("")
                        .chars()
                        .take(w.saturating_sub(2) as usize)
                        .collect();
                    f.put_str(1, 0, &title);
                }
                f
            }
            Some(ElementKind::Button) => {
                let mut f = Fragment::blank(w, h, Some(' '));
                if h > 0 {
                    f.put_str(0, (h - 1) / 2, &format!("[{}]", label.replace('\n', " ")));
                }
                f
            }
            Some(ElementKind::Text) => {
                let mut f = Fragment::blank(w, h, Some(' '));
                for (y, line) in label.lines().enumerate() {
                    f.put_str(0, y as u32, line);
                }
                f
            }
            Some(ElementKind::Image) => Fragment::blank(w, h, Some(label.chars().next().map(printable).unwrap_or('#'))),
        }
    }

    fn content_rect(&self, el: &Element) -> Rect {
        match el.kind {
            Some(ElementKind::Window) if el.w >= 2 && el.h >= 2 => Rect::new(1, 1, el.w - 2, el.h - 2),
            Some(ElementKind::Window) => Rect::default(),
            _ => Rect::new(0, 0, el.w, el.h),
        }
    }
}

/// Event map entry: screen rectangle and the receptor it feeds, as a path
/// from the scene root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapEntry {
    pub rect: Rect,
    pub path: String,
}

/// Receptor rectangles, topmost first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventMap {
    pub entries: Vec<MapEntry>,
}

impl EventMap {
    /// The topmost receptor covering (x, y).
    pub fn lookup(&self, x: u32, y: u32) -> Option<&MapEntry> {
        self.entries.iter().find(|e| e.rect.contains(x, y))
    }
}

#[derive(Debug)]
struct MapFragment {
    w: u32,
    h: u32,
    /// Relative to the element, paths relative to its directory.
    entries: Vec<MapEntry>,
}

/// Memo of rendered fragments and event-map fragments keyed by manifest id.
/// Safe to share between threads; inserts are atomic per key.
pub struct RenderCache {
    renderer: Box<dyn Renderer>,
    enabled: bool,
    fragments: RwLock<HashMap<BlockId, Arc<Fragment>>>,
    maps: RwLock<HashMap<BlockId, Arc<MapFragment>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for RenderCache {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for RenderCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RenderCache")
            .field("enabled", &self.enabled)
            .field("fragments", &self.len())
            .field("hits", &self.hits())
            .field("misses", &self.misses())
            .finish()
    }
}

impl RenderCache {
    pub fn new() -> Self {
        Self::with_renderer(Box::new(TextRenderer))
    }

    pub fn with_renderer(renderer: Box<dyn Renderer>) -> Self {
        RenderCache {
            renderer,
            enabled: true,
            fragments: RwLock::default(),
            maps: RwLock::default(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// A cache that never stores anything: every element is rendered cold.
    pub fn disabled() -> Self {
        RenderCache {
            enabled: false,
            ..Self::new()
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of cached render fragments.
    pub fn len(&self) -> usize {
        self.fragments.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.fragments.read().unwrap().contains_key(id)
    }

    fn lookup<T>(&self, map: &RwLock<HashMap<BlockId, Arc<T>>>, id: &BlockId) -> Option<Arc<T>> {
        let hit = map.read().unwrap().get(id).cloned();
        if hit.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        } else {
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        hit
    }

    fn insert<T>(&self, map: &RwLock<HashMap<BlockId, Arc<T>>>, id: BlockId, v: T) -> Arc<T> {
        let v = Arc::new(v);
        if self.enabled {
            map.write().unwrap().entry(id).or_insert_with(|| v.clone()).clone()
        } else {
            v
        }
    }
}

fn join(path: &str, name: &str) -> String {
    if path.is_empty() {
        name.to_string()
    } else {
        format!("{path}/{name}")
    }
}

fn attr_bytes(fs: &MerkleFs<'_>, m: &Manifest, name: &str, dir: &str) -> Result<Option<Vec<u8>>, SceneError> {
    let Some(e) = m.get(name.as_bytes()) else {
        return Ok(None);
    };
    match e.kind {
        EntryKind::Lwf => Ok(e.inline.clone()),
        EntryKind::File => Ok(Some(fs.store().read_file(&e.target).map_err(FsError::from)?)),
        _ => Err(SceneError::Attr {
            path: join(dir, name),
            msg: format!("expected a file, found {}", e.kind.label()),
        }),
    }
}

fn attr_str(fs: &MerkleFs<'_>, m: &Manifest, name: &str, dir: &str) -> Result<Option<String>, SceneError> {
    attr_bytes(fs, m, name, dir)?
        .map(|b| {
            String::from_utf8(b).map_err(|_| SceneError::Attr {
                path: join(dir, name),
                msg: "not UTF-8".into(),
            })
        })
        .transpose()
}

fn attr_num(fs: &MerkleFs<'_>, m: &Manifest, name: &str, dir: &str) -> Result<Option<u32>, SceneError> {
    let Some(s) = attr_str(fs, m, name, dir)? else {
        return Ok(None);
    };
    let bad = |msg: String| SceneError::Attr {
        path: join(dir, name),
        msg,
    };
    let t = s.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad(format!("{t:?} is not a non-negative integer")));
    }
    let v: u32 = t.parse().map_err(|_| bad(format!("{t:?} is out of range")))?;
    if matches!(name, "w" | "h") && v > MAX_DIM {
        return Err(bad(format!("{v} exceeds {MAX_DIM}")));
    }
    Ok(Some(v))
}

/// Decodes an element's attributes. At the root, `kind` and size are
/// optional; a missing root size is filled in from the children later.
pub fn parse_element(fs: &MerkleFs<'_>, m: &Manifest, dir: &str, root: bool) -> Result<Element, SceneError> {
    let kind = match attr_str(fs, m, "kind", dir)? {
        Some(k) => Some(ElementKind::parse(k.trim()).ok_or_else(|| SceneError::Attr {
            path: join(dir, "kind"),
            msg: format!("unknown element kind {:?}", k.trim()),
        })?),
        None if root => None,
        None => {
            return Err(SceneError::Attr {
                path: join(dir, "kind"),
                msg: "missing".into(),
            })
        }
    };
    let label = attr_str(fs, m, "label", dir)?.unwrap_or_default();
    let layout = match attr_str(fs, m, "layout", dir)?.as_deref().map(str::trim) {
        None => None,
        Some("row") => Some(Layout::Row),
        Some("column") => Some(Layout::Column),
        Some(other) => {
            return Err(SceneError::Attr {
                path: join(dir, "layout"),
                msg: format!("unknown layout {other:?}"),
            })
        }
    };
    let natural = |k: Option<ElementKind>| -> Option<(u32, u32)> {
        match k {
            Some(ElementKind::Text) => Some((
                label.lines().map(|l| l.chars().count() as u32).max().unwrap_or(0),
                label.lines().count() as u32,
            )),
            Some(ElementKind::Button) => Some((label.chars().count() as u32 + 2, 1)),
            _ => None,
        }
    };
    let dim = |name: &str| -> Result<u32, SceneError> {
        match attr_num(fs, m, name, dir)? {
            Some(v) => Ok(v),
            None => match natural(kind) {
                Some((w, h)) => Ok((if name == "w" { w } else { h }).min(MAX_DIM)),
                None if root => Ok(0),
                None => Err(SceneError::Attr {
                    path: join(dir, name),
                    msg: "missing".into(),
                }),
            },
        }
    };
    let w = dim("w")?;
    let h = dim("h")?;
    let (x, y) = if root {
        (0, 0)
    } else {
        (attr_num(fs, m, "x", dir)?.unwrap_or(0), attr_num(fs, m, "y", dir)?.unwrap_or(0))
    };
    Ok(Element {
        kind,
        x,
        y,
        w,
        h,
        label,
        layout,
    })
}

fn children(m: &Manifest) -> impl Iterator<Item = (String, BlockId)> + '_ {
    m.entries()
        .iter()
        .filter(|e| e.kind == EntryKind::Dir)
        .map(|e| (e.name.to_string(), e.target))
}

/// Positions of children inside `content`, given their sizes.
fn place(el: &Element, content: Rect, kids: &[(u32, u32, u32, u32)]) -> Vec<(u32, u32)> {
    let mut cursor = 0u32;
    kids.iter()
        .map(|&(x, y, w, h)| {
            let (px, py) = match el.layout {
                None => (x, y),
                Some(Layout::Row) => {
                    let at = cursor;
                    cursor = cursor.saturating_add(w);
                    (at, 0)
                }
                Some(Layout::Column) => {
                    let at = cursor;
                    cursor = cursor.saturating_add(h);
                    (0, at)
                }
            };
            (content.x.saturating_add(px), content.y.saturating_add(py))
        })
        .collect()
}

/// Root size when the canvas does not declare one.
fn fit(el: &mut Element, kids: &[(u32, u32, u32, u32)], at: &[(u32, u32)]) {
    if el.kind.is_none() {
        let right = kids.iter().zip(at).map(|(k, p)| p.0.saturating_add(k.2)).max().unwrap_or(0);
        let bottom = kids.iter().zip(at).map(|(k, p)| p.1.saturating_add(k.3)).max().unwrap_or(0);
        if el.w == 0 {
            el.w = right.min(MAX_DIM);
        }
        if el.h == 0 {
            el.h = bottom.min(MAX_DIM);
        }
    }
}

struct Walk<'a, 'f> {
    fs: &'a MerkleFs<'f>,
    cache: &'a RenderCache,
    calls: u64,
}

impl Walk<'_, '_> {
    fn fragment(&mut self, id: BlockId, dir: &str, root: bool) -> Result<(Element, Arc<Fragment>), SceneError> {
        let m = self.fs.load_manifest(&id)?;
        let mut el = parse_element(self.fs, &m, dir, root)?;
        if let Some(f) = self.cache.lookup(&self.cache.fragments, &id) {
            el.w = f.w;
            el.h = f.h;
            return Ok((el, f));
        }
        if !root {
            self.calls += 1;
        }
        let mut kids = Vec::new();
        for (name, cid) in children(&m) {
            let (c, f) = self.fragment(cid, &join(dir, &name), false)?;
            kids.push(((c.x, c.y, f.w, f.h), f));
        }
        let sizes: Vec<_> = kids.iter().map(|k| k.0).collect();
        let mut content = self.cache.renderer.content_rect(&el);
        let at = place(&el, content, &sizes);
        if root {
            fit(&mut el, &sizes, &at);
            content = self.cache.renderer.content_rect(&el);
        }
        let mut frag = self.cache.renderer.draw(&el);
        for ((_, f), (x, y)) in kids.iter().zip(&at) {
            frag.blit(f, *x, *y, content);
        }
        Ok((el, self.cache.insert(&self.cache.fragments, id, frag)))
    }

    fn map(&mut self, id: BlockId, dir: &str, root: bool) -> Result<(Element, Arc<MapFragment>), SceneError> {
        let m = self.fs.load_manifest(&id)?;
        let mut el = parse_element(self.fs, &m, dir, root)?;
        if let Some(f) = self.cache.lookup(&self.cache.maps, &id) {
            el.w = f.w;
            el.h = f.h;
            return Ok((el, f));
        }
        if !root {
            self.calls += 1;
        }
        let mut kids = Vec::new();
        for (name, cid) in children(&m) {
            let (c, f) = self.map(cid, &join(dir, &name), false)?;
            kids.push(((c.x, c.y, f.w, f.h), name, f));
        }
        let sizes: Vec<_> = kids.iter().map(|k| k.0).collect();
        let mut content = self.cache.renderer.content_rect(&el);
        let at = place(&el, content, &sizes);
        if root {
            fit(&mut el, &sizes, &at);
            content = self.cache.renderer.content_rect(&el);
        }
        let mut entries = Vec::new();
        for ((_, name, f), (x, y)) in kids.iter().zip(&at).rev() {
            for e in &f.entries {
                let rect = e.rect.offset(*x, *y).intersect(content);
                if !rect.is_empty() {
                    entries.push(MapEntry {
                        rect,
                        path: join(name, &e.path),
                    });
                }
            }
        }
        let own = Rect::new(0, 0, el.w, el.h);
        if !own.is_empty() {
            for e in m.entries().iter().filter(|e| e.kind == EntryKind::Receptor) {
                entries.push(MapEntry {
                    rect: own,
                    path: e.name.to_string(),
                });
            }
        }
        let frag = MapFragment { w: el.w, h: el.h, entries };
        Ok((el, self.cache.insert(&self.cache.maps, id, frag)))
    }
}

/// Renders the scene rooted at `scene`. Returns the grid and the number of
/// elements below the root that missed the cache.
pub fn render(fs: &MerkleFs<'_>, scene: TreeHandle, cache: &RenderCache) -> Result<(Grid, u64), SceneError> {
    let mut w = Walk { fs, cache, calls: 0 };
    let (_, frag) = w.fragment(scene.root, "", true)?;
    Ok((Grid::from_fragment(&frag), w.calls))
}

/// Event map of the scene with the same caching contract as [`render`].
pub fn event_map(fs: &MerkleFs<'_>, scene: TreeHandle, cache: &RenderCache) -> Result<EventMap, SceneError> {
    event_map_counted(fs, scene, cache).map(|(m, _)| m)
}

/// [`event_map`] plus the number of element cache misses below the root.
pub fn event_map_counted(fs: &MerkleFs<'_>, scene: TreeHandle, cache: &RenderCache) -> Result<(EventMap, u64), SceneError> {
    let mut w = Walk { fs, cache, calls: 0 };
    let (el, frag) = w.map(scene.root, "", true)?;
    let canvas = Rect::new(0, 0, el.w, el.h);
    let entries = frag
        .entries
        .iter()
        .filter_map(|e| {
            let rect = e.rect.intersect(canvas);
            (!rect.is_empty()).then(|| MapEntry {
                rect,
                path: e.path.clone(),
            })
        })
        .collect();
    Ok((EventMap { entries }, w.calls))
}

/// Writes `payload` into the receptor under `(x, y)`. Returns the new root;
/// the write gets history like any other.
pub fn deliver_event(
    fs: &MerkleFs<'_>,
    scene: TreeHandle,
    point: (u32, u32),
    payload: &[u8],
    stamp: VersionStamp,
) -> Result<TreeHandle, SceneError> {
    deliver_event_with(fs, &RenderCache::new(), scene, point, payload, stamp)
}

pub fn deliver_event_with(
    fs: &MerkleFs<'_>,
    cache: &RenderCache,
    scene: TreeHandle,
    (x, y): (u32, u32),
    payload: &[u8],
    stamp: VersionStamp,
) -> Result<TreeHandle, SceneError> {
    let map = event_map(fs, scene, cache)?;
    let target = map.lookup(x, y).ok_or(SceneError::NoTarget { x, y })?;
    Ok(fs.write_file(scene, &target.path, payload, stamp)?)
}
