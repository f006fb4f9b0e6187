//! Prefix-stable finite binary trees with cached subtree counts.
//!
//! A tree is a set of words closed under taking prefixes. Nodes live in an
//! arena of child-indexed records; every record carries the size of the
//! subtree below it, maintained incrementally on insertion, so relative
//! subtree sizes, boundary ranks and routing are all O(depth). Growth
//! processes only ever touch root-to-leaf paths, so no word-keyed map is
//! kept. Deletion is not supported: the processes here only grow.

use crate::word::{BitSource, Word, MAX_DEPTH};
use crate::{Error, Result};
use num::rational::Ratio;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::num::NonZeroU32;

/// Height cap for [`BinaryTree::complete`]; 2^23 nodes is already ~130 MB.
pub const MAX_COMPLETE_HEIGHT: u32 = 22;

#[derive(Clone, Debug)]
struct Node {
    child: [Option<NonZeroU32>; 2],
    /// Number of stored words weakly below this node (at least 1).
    count: u64,
}

/// Outcome of [`BinaryTree::route`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// The word is stored; carries its subtree count and the count of its
    /// right child (0 if absent).
    Stored { count: u64, right_count: u64 },
    /// The word is absent; carries the length of its shortest absent
    /// prefix, i.e. the boundary node the walk exits through.
    Exited { exit_len: usize },
}

/// A finite prefix-stable set of words. Empty trees are allowed; a nonempty
/// tree always stores the root at arena index 0.
#[derive(Clone, Debug, Default)]
pub struct BinaryTree {
    nodes: Vec<Node>,
    height: u32,
}

impl BinaryTree {
    /// The empty tree.
    pub fn new() -> Self {
        Self::default()
    }

    /// The one-node tree `{root}`, the start of every growth process.
    pub fn root_only() -> Self {
        let mut t = Self::new();
        t.insert(&Word::root()).expect("inserting the root into an empty tree");
        t
    }

    /// Number of stored words, `|x|`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Length of the longest stored word.
    pub fn height(&self) -> usize {
        self.height as usize
    }

    #[inline]
    fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    fn find(&self, u: &Word) -> Option<u32> {
        if self.is_empty() {
            return None;
        }
        let mut cur = 0u32;
        for i in 0..u.len() {
            cur = self.node(cur).child[u.bit(i) as usize]?.get();
        }
        Some(cur)
    }

    pub fn contains(&self, u: &Word) -> bool {
        self.find(u).is_some()
    }

    /// Inserts `v`, which must be an element of the external boundary:
    /// its parent stored, itself absent. Subtree counts along the
    /// root-to-`v` path each increase by one.
    pub fn insert(&mut self, v: &Word) -> Result<()> {
        if v.len() >= MAX_DEPTH {
            return Err(Error::DepthOverflow(v.len(), MAX_DEPTH));
        }
        if self.is_empty() {
            if !v.is_empty() {
                return Err(Error::OrphanInsert(v.to_string()));
            }
            self.nodes.push(Node { child: [None, None], count: 1 });
            return Ok(());
        }
        if v.is_empty() {
            return Err(Error::DuplicateNode(v.to_string()));
        }
        // Validate before touching any count.
        let mut cur = 0u32;
        for i in 0..v.len() - 1 {
            cur = match self.node(cur).child[v.bit(i) as usize] {
                Some(c) => c.get(),
                None => return Err(Error::OrphanInsert(v.to_string())),
            };
        }
        let last = v.bit(v.len() - 1) as usize;
        if self.node(cur).child[last].is_some() {
            return Err(Error::DuplicateNode(v.to_string()));
        }
        let new_id = NonZeroU32::new(self.nodes.len() as u32)
            .expect("child ids start at 1; the root occupies index 0");
        self.nodes.push(Node { child: [None, None], count: 1 });
        let mut cur = 0u32;
        for i in 0..v.len() - 1 {
            self.nodes[cur as usize].count += 1;
            cur = self.node(cur).child[v.bit(i) as usize].unwrap().get();
        }
        self.nodes[cur as usize].count += 1;
        self.nodes[cur as usize].child[last] = Some(new_id);
        self.height = self.height.max(v.len() as u32);
        Ok(())
    }

    /// `|σ(x,u)|`: the number of stored words weakly below `u` (0 if absent).
    pub fn subtree_count(&self, u: &Word) -> u64 {
        self.find(u).map_or(0, |id| self.node(id).count)
    }

    /// Routes a finite word through the tree in one walk.
    pub fn route(&self, u: &Word) -> Routing {
        if self.is_empty() {
            return Routing::Exited { exit_len: 0 };
        }
        let mut cur = 0u32;
        for i in 0..u.len() {
            match self.node(cur).child[u.bit(i) as usize] {
                Some(c) => cur = c.get(),
                None => return Routing::Exited { exit_len: i + 1 },
            }
        }
        let n = self.node(cur);
        let right_count = n.child[1].map_or(0, |c| self.node(c.get()).count);
        Routing::Stored { count: n.count, right_count }
    }

    /// Relative subtree size `t(x,u) = |σ(x,u)| / |x|` as a float.
    pub fn t(&self, u: &Word) -> Result<f64> {
        let r = self.t_exact(u)?;
        Ok(*r.numer() as f64 / *r.denom() as f64)
    }

    /// `t(x,u)` as an exact rational; identity tests use this form.
    pub fn t_exact(&self, u: &Word) -> Result<Ratio<u64>> {
        if self.is_empty() {
            return Err(Error::EmptyTree);
        }
        Ok(Ratio::new(self.subtree_count(u), self.len() as u64))
    }

    /// Boundary-based size statistic: the fraction of external nodes weakly
    /// below `u`. Agrees with the boundary-measure mass of the cylinder at
    /// `u` for every `u` in the tree or on its boundary.
    pub fn t0(&self, u: &Word) -> Result<Ratio<u64>> {
        if self.is_empty() {
            return Err(Error::EmptyTree);
        }
        let total = self.len() as u64 + 1;
        let mut cur = 0u32;
        for i in 0..u.len() {
            match self.node(cur).child[u.bit(i) as usize] {
                Some(c) => cur = c.get(),
                // Walk exits exactly at u: u is an external node.
                None if i == u.len() - 1 => return Ok(Ratio::new(1, total)),
                None => return Ok(Ratio::new(0, total)),
            }
        }
        Ok(Ratio::new(self.node(cur).count + 1, total))
    }

    /// The external boundary in lexicographic order: all absent words whose
    /// parent is stored. The empty tree's boundary is the root slot, keeping
    /// `|boundary| = |x| + 1` for every tree.
    pub fn external_boundary(&self) -> Vec<Word> {
        if self.is_empty() {
            return vec![Word::root()];
        }
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut path = Word::root();
        self.boundary_rec(0, &mut path, &mut out);
        out
    }

    fn boundary_rec(&self, id: u32, path: &mut Word, out: &mut Vec<Word>) {
        for b in 0..2u8 {
            path.push(b);
            match self.node(id).child[b as usize] {
                Some(c) => self.boundary_rec(c.get(), path, out),
                None => out.push(path.clone()),
            }
            path.pop();
        }
    }

    /// The `r`-th boundary node in lexicographic order, 1-based. Descends by
    /// subtree counts, so this is O(depth) with no auxiliary structure.
    pub fn rank_boundary(&self, r: u64) -> Word {
        let total = self.len() as u64 + 1;
        assert!(r >= 1 && r <= total, "boundary rank {r} out of 1..={total}");
        if self.is_empty() {
            return Word::root();
        }
        let mut cur = 0u32;
        let mut r = r;
        let mut path = Word::root();
        loop {
            let left_cells = match self.node(cur).child[0] {
                Some(c) => self.node(c.get()).count + 1,
                None => 1,
            };
            let (bit, next) = if r <= left_cells {
                (0, self.node(cur).child[0])
            } else {
                r -= left_cells;
                (1, self.node(cur).child[1])
            };
            path.push(bit);
            match next {
                None => return path,
                Some(c) => cur = c.get(),
            }
        }
    }

    /// Fused rank-select and insert: one descent locates the `r`-th boundary
    /// node, bumps the counts along the way and attaches it. This is the
    /// rank-insertion hot path.
    pub fn insert_boundary_rank(&mut self, r: u64) -> Result<Word> {
        let total = self.len() as u64 + 1;
        assert!(r >= 1 && r <= total, "boundary rank {r} out of 1..={total}");
        if self.is_empty() {
            self.insert(&Word::root())?;
            return Ok(Word::root());
        }
        if self.height() + 1 >= MAX_DEPTH {
            // Rare deep-tree path: validate before mutating.
            let v = self.rank_boundary(r);
            self.insert(&v)?;
            return Ok(v);
        }
        let mut cur = 0u32;
        let mut r = r;
        let mut path = Word::root();
        loop {
            self.nodes[cur as usize].count += 1;
            let left_cells = match self.node(cur).child[0] {
                Some(c) => self.node(c.get()).count + 1,
                None => 1,
            };
            let (bit, next) = if r <= left_cells {
                (0usize, self.node(cur).child[0])
            } else {
                r -= left_cells;
                (1, self.node(cur).child[1])
            };
            path.push(bit as u8);
            match next {
                Some(c) => cur = c.get(),
                None => {
                    let id = NonZeroU32::new(self.nodes.len() as u32).unwrap();
                    self.nodes.push(Node { child: [None, None], count: 1 });
                    self.nodes[cur as usize].child[bit] = Some(id);
                    self.height = self.height.max(path.len() as u32);
                    return Ok(path);
                }
            }
        }
    }

    /// Fused routing and insert for digital growth: routes the bit string to
    /// its exit node, bumping counts along the way, and attaches it there.
    pub fn insert_exit(&mut self, bits: &mut impl BitSource) -> Result<Word> {
        assert!(!self.is_empty(), "insert_exit requires a nonempty tree");
        if self.height() + 1 >= MAX_DEPTH {
            let v = self.exit_node(bits);
            self.insert(&v)?;
            return Ok(v);
        }
        let mut cur = 0u32;
        let mut path = Word::root();
        loop {
            self.nodes[cur as usize].count += 1;
            let b = bits.next_bit();
            path.push(b);
            match self.node(cur).child[b as usize] {
                Some(c) => cur = c.get(),
                None => {
                    let id = NonZeroU32::new(self.nodes.len() as u32).unwrap();
                    self.nodes.push(Node { child: [None, None], count: 1 });
                    self.nodes[cur as usize].child[b as usize] = Some(id);
                    self.height = self.height.max(path.len() as u32);
                    return Ok(path);
                }
            }
        }
    }

    /// Builds a tree of `n` nodes top-down from a size-split rule:
    /// `left_size(m)` decides how many of the `m - 1` non-root nodes of a
    /// size-`m` subtree go left. Counts are assigned directly.
    pub(crate) fn from_split(n: u64, mut left_size: impl FnMut(u64) -> u64) -> BinaryTree {
        let mut t = BinaryTree::new();
        if n == 0 {
            return t;
        }
        t.nodes.push(Node { child: [None, None], count: n });
        let mut stack = vec![(0u32, n, 0u32)];
        while let Some((id, m, depth)) = stack.pop() {
            t.height = t.height.max(depth);
            if m == 1 {
                continue;
            }
            let a = left_size(m);
            debug_assert!(a <= m - 1);
            for (bit, size) in [(0usize, a), (1, m - 1 - a)] {
                if size > 0 {
                    let cid = NonZeroU32::new(t.nodes.len() as u32).unwrap();
                    t.nodes.push(Node { child: [None, None], count: size });
                    t.nodes[id as usize].child[bit] = Some(cid);
                    stack.push((cid.get(), size, depth + 1));
                }
            }
        }
        t
    }

    /// Subtree counts of the two children of a *stored* node (0 if the
    /// child is absent); `None` if `u` itself is absent.
    pub fn child_counts(&self, u: &Word) -> Option<(u64, u64)> {
        let id = self.find(u)?;
        let get = |c: Option<NonZeroU32>| c.map_or(0, |c| self.node(c.get()).count);
        Some((get(self.node(id).child[0]), get(self.node(id).child[1])))
    }

    /// Cursor on the root for O(1)-per-step downward navigation.
    pub fn root_ref(&self) -> Option<NodeRef<'_>> {
        if self.is_empty() {
            None
        } else {
            Some(NodeRef { tree: self, id: 0 })
        }
    }

    /// Routes an infinite bit string through the tree and returns the unique
    /// boundary node where it exits. Consumes at most `height + 1` bits.
    pub fn exit_node(&self, bits: &mut impl BitSource) -> Word {
        assert!(!self.is_empty(), "exit_node requires a nonempty tree");
        let mut cur = 0u32;
        let mut path = Word::root();
        loop {
            let b = bits.next_bit();
            path.push(b);
            match self.node(cur).child[b as usize] {
                None => return path,
                Some(c) => cur = c.get(),
            }
        }
    }

    /// The subtree rooted at `u`, re-addressed so `u` becomes the root.
    /// Empty if `u` is not stored.
    pub fn subtree(&self, u: &Word) -> BinaryTree {
        let Some(start) = self.find(u) else {
            return BinaryTree::new();
        };
        let mut out = BinaryTree::new();
        out.nodes.push(Node { child: [None, None], count: self.node(start).count });
        let mut stack = vec![(start, 0u32, 0u32)];
        while let Some((old, new, depth)) = stack.pop() {
            out.height = out.height.max(depth);
            for b in 0..2usize
            {
                if let Some(c) = self.node(old).child[b] {
                    let id = out.nodes.len() as u32;
                    out.nodes.push(Node { child: [None, None], count: self.node(c.get()).count });
                    out.nodes[new as usize].child[b] = NonZeroU32::new(id);
                    stack.push((c.get(), id, depth + 1));
                }
            }
        }
        out
    }

    /// Relabels every stored word by XOR with the bit source: the group
    /// action on addresses. Structurally this swaps the children of every
    /// node at depth `d` where bit `d` is 1, so sizes, counts and the depth
    /// profile are all preserved.
    pub fn group_act(&self, bits: &mut impl BitSource) -> BinaryTree {
        if self.is_empty() {
            return BinaryTree::new();
        }
        let mask: Vec<u8> = (0..self.height()).map(|_| bits.next_bit()).collect();
        let mut out = BinaryTree::new();
        out.height = self.height;
        out.nodes.push(Node { child: [None, None], count: self.node(0).count });
        let mut stack = vec![(0u32, 0u32, 0usize)];
        while let Some((old, new, depth)) = stack.pop() {
            let flip = if depth < mask.len() { mask[depth] as usize } else { 0 };
            for b in 0..2usize {
                if let Some(c) = self.node(old).child[b ^ flip] {
                    let id = out.nodes.len() as u32;
                    out.nodes.push(Node { child: [None, None], count: self.node(c.get()).count });
                    out.nodes[new as usize].child[b] = NonZeroU32::new(id);
                    stack.push((c.get(), id, depth + 1));
                }
            }
        }
        out
    }

    /// XOR relabeling by a finite word, which must supply at least
    /// `height` bits.
    pub fn group_act_word(&self, v: &Word) -> Result<BinaryTree> {
        if v.len() < self.height() {
            return Err(Error::GroupElementTooShort { need: self.height(), got: v.len() });
        }
        let mut i = 0;
        let mut src = || {
            let b = v.bit(i);
            i += 1;
            b
        };
        Ok(self.group_act(&mut src))
    }

    /// The complete tree of the given height: all words of length <= h.
    pub fn complete(h: u32) -> Result<BinaryTree> {
        if h > MAX_COMPLETE_HEIGHT {
            return Err(Error::HeightOverflow(h, MAX_COMPLETE_HEIGHT));
        }
        let n = (1u64 << (h + 1)) - 1;
        let mut nodes = Vec::with_capacity(n as usize);
        // Heap layout: node i at depth d has children 2i+1, 2i+2.
        for i in 0..n {
            let depth: u32 = (i + 1).ilog2();
            let count = (1u64 << (h + 1 - depth)) - 1;
            let child = if depth < h {
                [NonZeroU32::new(2 * i as u32 + 1), NonZeroU32::new(2 * i as u32 + 2)]
            } else {
                [None, None]
            };
            nodes.push(Node { child, count });
        }
        Ok(BinaryTree { nodes, height: h })
    }

    /// Weighted L1 distance between subtree size functions:
    /// sum over u of w(u) |t(x,u) - t(y,u)|. The summand vanishes off the
    /// union of the two trees, so the sum is finite for any weight.
    pub fn distance_by(&self, other: &BinaryTree, w: &dyn Fn(&Word) -> f64) -> Result<f64> {
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptyTree);
        }
        let nx = self.len() as f64;
        let ny = other.len() as f64;
        let mut acc = 0.0;
        let mut path = Word::root();
        self.distance_rec(Some(0), other, Some(0), &mut path, nx, ny, w, &mut acc);
        Ok(acc)
    }

    /// [`Self::distance_by`] with the default summable weight 4^{-|u|}.
    pub fn distance(&self, other: &BinaryTree) -> Result<f64> {
        self.distance_by(other, &default_weight)
    }

    #[allow(clippy::too_many_arguments)]
    fn distance_rec(
        &self,
        a: Option<u32>,
        other: &BinaryTree,
        b: Option<u32>,
        path: &mut Word,
        nx: f64,
        ny: f64,
        w: &dyn Fn(&Word) -> f64,
        acc: &mut f64,
    ) {
        let ca = a.map_or(0, |id| self.node(id).count) as f64;
        let cb = b.map_or(0, |id| other.node(id).count) as f64;
        *acc += w(path) * (ca / nx - cb / ny).abs();
        for bit in 0..2usize {
            let na = a.and_then(|id| self.node(id).child[bit]).map(|c| c.get());
            let nb = b.and_then(|id| other.node(id).child[bit]).map(|c| c.get());
            if na.is_some() || nb.is_some() {
                path.push(bit as u8);
                self.distance_rec(na, other, nb, path, nx, ny, w, acc);
                path.pop();
            }
        }
    }

    /// Stored words in preorder (root, then left subtree, then right).
    pub fn node_words(&self) -> Vec<Word> {
        let mut out = Vec::with_capacity(self.len());
        if self.is_empty() {
            return out;
        }
        let mut path = Word::root();
        self.words_rec(0, &mut path, &mut out);
        out
    }

    fn words_rec(&self, id: u32, path: &mut Word, out: &mut Vec<Word>) {
        out.push(path.clone());
        for b in 0..2u8 {
            if let Some(c) = self.node(id).child[b as usize] {
                path.push(b);
                self.words_rec(c.get(), path, out);
                path.pop();
            }
        }
    }

    /// Rebuilds a tree from any collection of words. Parents sort before
    /// their descendants in the word order, so sorted insertion validates
    /// prefix stability as it goes.
    pub fn from_words<I: IntoIterator<Item = Word>>(words: I) -> Result<BinaryTree> {
        let mut ws: Vec<Word> = words.into_iter().collect();
        ws.sort();
        let mut t = BinaryTree::new();
        for w in &ws {
            t.insert(w)?;
        }
        Ok(t)
    }

    /// Compact structural key (preorder child-presence code); two trees get
    /// the same key iff they are equal as word sets.
    pub fn shape_key(&self) -> String {
        let mut s = String::with_capacity(2 * self.len());
        if self.is_empty() {
            return s;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            for b in [1usize, 0] {
                if let Some(c) = self.node(id).child[b] {
                    stack.push(c.get());
                }
            }
            s.push(if self.node(id).child[0].is_some() { 'L' } else { '.' });
            s.push(if self.node(id).child[1].is_some() { 'R' } else { '.' });
        }
        s
    }
}

/// The default distance weight, `4^{-|u|}`; its total over all words is
/// `sum_k 2^k 4^{-k} = 2`, so the distance is finite.
pub fn default_weight(u: &Word) -> f64 {
    0.25f64.powi(u.len() as i32)
}

/// A handle on a stored node, for walking down the tree without repeated
/// root-to-node searches.
#[derive(Clone, Copy)]
pub struct NodeRef<'a> {
    tree: &'a BinaryTree,
    id: u32,
}

impl<'a> NodeRef<'a> {
    pub fn count(&self) -> u64 {
        self.tree.node(self.id).count
    }

    pub fn child(&self, bit: u8) -> Option<NodeRef<'a>> {
        self.tree.node(self.id).child[bit as usize]
            .map(|c| NodeRef { tree: self.tree, id: c.get() })
    }

    pub fn child_count(&self, bit: u8) -> u64 {
        self.child(bit).map_or(0, |c| c.count())
    }
}

impl PartialEq for BinaryTree {
    /// Structural equality as word sets (arena layout is irrelevant).
    fn eq(&self, other: &Self) -> bool {
        if self.len() != other.len() {
            return false;
        }
        if self.is_empty() {
            return true;
        }
        let mut stack = vec![(0u32, 0u32)];
        while let Some((a, b)) = stack.pop() {
            let (na, nb) = (self.node(a), other.node(b));
            if na.count != nb.count {
                return false;
            }
            for bit in 0..2usize {
                match (na.child[bit], nb.child[bit]) {
                    (Some(x), Some(y)) => stack.push((x.get(), y.get())),
                    (None, None) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

impl Eq for BinaryTree {}

impl Serialize for BinaryTree {
    /// Serializes as the preorder list of node words.
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.node_words().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let words = Vec::<Word>::deserialize(d)?;
        BinaryTree::from_words(words).map_err(D::Error::custom)
    }
}
