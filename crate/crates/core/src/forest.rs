//! Typed planar forests stored in depth-first order, and their encodings:
//! height process, Lukasiewicz walk, type counts, component index and the
//! type-position processes.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

/// A typed ordered forest. Vertex `v` is the `v`-th vertex in depth-first
/// (lexicographic) order; children of a vertex appear in sibling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanarForest {
    k: usize,
    parent: Vec<u32>,
    first_child: Vec<u32>,
    next_sibling: Vec<u32>,
    children: Vec<u32>,
    types: Vec<u8>,
    depth: Vec<u32>,
    component: Vec<u32>,
    subtree_end: Vec<u32>,
}

impl PlanarForest {
    /// Builds a forest from parent pointers in depth-first order.
    ///
    /// Fails unless every parent precedes its child and the order is a
    /// genuine preorder (each vertex hangs off the current rightmost path).
    pub fn from_parents(parents: &[Option<usize>], types: &[usize], k: usize) -> Result<Self> {
        if parents.len() != types.len() {
            return Err(Error::invariant("forest arrays", "parent and type arrays differ in length"));
        }
        if k == 0 || k > u8::MAX as usize {
            return Err(Error::invariant("type count", format!("K = {k} unsupported")));
        }
        if parents.len() >= NONE as usize {
            return Err(Error::InvalidArgument("forest too large".into()));
        }
        let mut path: Vec<usize> = Vec::new();
        for (v, (&p, &t)) in parents.iter().zip(types).enumerate() {
            if t >= k {
                return Err(Error::invariant("word letters", format!("vertex {v} has type {} > K", t + 1)));
            }
            match p {
                None => path.clear(),
                Some(p) => {
                    if p >= v {
                        return Err(Error::invariant(
                            "depth-first order",
                            format!("vertex {v} has parent {p} >= {v}"),
                        ));
                    }
                    while path.last().is_some_and(|&top| top != p) {
                        path.pop();
                    }
                    if path.is_empty() {
                        return Err(Error::invariant(
                            "depth-first order",
                            format!("vertex {v} attaches to {p}, which is not on the current path"),
                        ));
                    }
                }
            }
            path.push(v);
        }
        Ok(Self::build(parents.iter().map(|p| p.map_or(NONE, |p| p as u32)).collect(), types, k))
    }

    /// Same as [`from_parents`](Self::from_parents) for callers that already
    /// generated vertices in preorder.
    pub(crate) fn from_preorder_unchecked(parent: Vec<u32>, types: &[usize], k: usize) -> Self {
        Self::build(parent, types, k)
    }

    fn build(parent: Vec<u32>, types: &[usize], k: usize) -> Self {
        let n = parent.len();
        let mut first_child = vec![NONE; n];
        let mut next_sibling = vec![NONE; n];
        let mut children = vec![0u32; n];
        let mut depth = vec![0u32; n];
        let mut component = vec![0u32; n];
        let mut last_child = vec![NONE; n];
        let mut last_root = NONE;
        let mut comp = 0u32;
        for v in 0..n {
            let p = parent[v];
            let prev = if p == NONE {
                comp += 1;
                depth[v] = 0;
                std::mem::replace(&mut last_root, v as u32)
            } else {
                let p = p as usize;
                depth[v] = depth[p] + 1;
                children[p] += 1;
                if first_child[p] == NONE {
                    first_child[p] = v as u32;
                }
                std::mem::replace(&mut last_child[p], v as u32)
            };
            if prev != NONE {
                next_sibling[prev as usize] = v as u32;
            }
            component[v] = comp;
        }
        let mut size = vec![1u32; n];
        for v in (0..n).rev() {
            if parent[v] != NONE {
                size[parent[v] as usize] += size[v];
            }
        }
        let subtree_end = (0..n).map(|v| v as u32 + size[v]).collect();
        PlanarForest {
            k,
            parent,
            first_child,
            next_sibling,
            children,
            types: types.iter().map(|&t| t as u8).collect(),
            depth,
            component,
            subtree_end,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.k
    }

    pub fn num_components(&self) -> usize {
        self.component.last().map_or(0, |&c| c as usize)
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        opt(self.parent[v])
    }

    pub fn first_child(&self, v: usize) -> Option<usize> {
        opt(self.first_child[v])
    }

    pub fn next_sibling(&self, v: usize) -> Option<usize> {
        opt(self.next_sibling[v])
    }

    pub fn children_count(&self, v: usize) -> usize {
        self.children[v] as usize
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.first_child(v), move |&c| self.next_sibling(c))
    }

    pub fn type_of(&self, v: usize) -> usize {
        self.types[v] as usize
    }

    pub fn types(&self) -> impl Iterator<Item = usize> + '_ {
        self.types.iter().map(|&t| t as usize)
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v] as usize
    }

    /// 1-based index of the tree containing `v`.
    pub fn component(&self, v: usize) -> usize {
        self.component[v] as usize
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.parent[v] == NONE)
    }

    /// One past the last descendant of `v`; the fringe subtree is `v..end`.
    pub fn subtree_end(&self, v: usize) -> usize {
        self.subtree_end[v] as usize
    }

    pub fn is_ancestor(&self, anc: usize, v: usize) -> bool {
        anc < v && v < self.subtree_end(anc)
    }

    /// Strict ancestors of `v`, nearest first.
    pub fn ancestors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.parent(v), move |&a| self.parent(a))
    }

    /// 0-based rank of `v` among its siblings.
    pub fn child_rank(&self, v: usize) -> Option<usize> {
        let p = self.parent(v)?;
        Some(self.children(p).position(|c| c == v).expect("child of parent"))
    }

    /// Types of the children of `v`, in order.
    pub fn child_word(&self, v: usize) -> Vec<usize> {
        self.children(v).map(|c| self.type_of(c)).collect()
    }

    /// Ulam-Harris label of `v`: component index followed by 1-based child ranks.
    pub fn ulam_harris(&self, v: usize) -> Vec<usize> {
        let mut path: Vec<usize> = std::iter::once(v)
            .chain(self.ancestors(v))
            .filter_map(|u| self.child_rank(u).map(|r| r + 1))
            .collect();
        path.push(self.component(v));
        path.reverse();
        path
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.parent.iter().map(|&p| opt(p)).collect()
    }

    pub fn type_vec(&self) -> Vec<usize> {
        self.types().collect()
    }

    /// Reads the column layout written by [`write_csv`](Self::write_csv).
    /// Lines starting with `#` are ignored.
    pub fn read_csv<R: BufRead>(reader: R, k: Option<usize>) -> Result<Self> {
        let mut forests = Self::read_csv_many(reader, k)?;
        match forests.len() {
            1 => Ok(forests.pop().unwrap()),
            n => Err(Error::Parse(format!("expected one forest, found {n}"))),
        }
    }

    /// Reads several forests separated by `# sample` comment lines.
    pub fn read_csv_many<R: BufRead>(reader: R, k: Option<usize>) -> Result<Vec<Self>> {
        let mut groups: Vec<Vec<String>> = vec![Vec::new()];
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.starts_with("# sample") && !groups.last().unwrap().is_empty() {
                groups.push(Vec::new());
            }
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("index") {
                continue;
            }
            groups.last_mut().unwrap().push(line);
        }
        groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|rows| {
                let text = rows.join("\n");
                let mut rdr = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .from_reader(text.as_bytes());
                let mut parents = Vec::new();
                let mut types = Vec::new();
                for (row, rec) in rdr.records().enumerate() {
                    let rec = rec?;
                    let field = |i: usize| -> Result<i64> {
                        rec.get(i)
                            .ok_or_else(|| Error::Parse(format!("row {row}: missing column {i}")))?
                            .parse()
                            .map_err(|_| Error::Parse(format!("row {row}: bad integer in column {i}")))
                    };
                    if field(0)? != row as i64 {
                        return Err(Error::Parse(format!("row {row}: index column out of sequence")));
                    }
                    let p = field(1)?;
                    let t = field(2)?;
                    if t < 1 {
                        return Err(Error::Parse(format!("row {row}: type must be >= 1")));
                    }
                    parents.push(if p < 0 { None } else { Some(p as usize) });
                    types.push(t as usize - 1);
                }
                let k = k.unwrap_or_else(|| types.iter().max().map_or(1, |t| t + 1));
                Self::from_parents(&parents, &types, k)
            })
            .collect()
    }

    /// Writes `index,parent,type,component` rows (parent `-1` for roots,
    /// types and components 1-based).
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "index,parent,type,component")?;
        }
        for v in 0..self.len() {
            let p = self.parent(v).map_or(-1, |p| p as i64);
            writeln!(out, "{v},{p},{},{}", self.type_of(v) + 1, self.component(v))?;
        }
        Ok(())
    }
}

fn opt(x: u32) -> Option<usize> {
    (x != NONE).then_some(x as usize)
}

/// All encodings of a forest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Encodings {
    #[serde(rename = "H")]
    pub h: Vec<u32>,
    /// Length `#f + 1`, `V[0] = 0`.
    #[serde(rename = "V")]
    pub v: Vec<i64>,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<Vec<u32>>,
    #[serde(rename = "Upsilon")]
    pub upsilon: Vec<u32>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<u32>>,
}

impl Encodings {
    pub fn of(f: &PlanarForest) -> Self {
        Encodings {
            h: height_process(f),
            v: lukasiewicz(f),
            lambda: type_counts(f),
            upsilon: upsilon(f),
            g: (0..f.num_types()).map(|i| g_process(f, i)).collect(),
        }
    }

    /// CSV with columns `n,H,V,Lambda_1..K,Upsilon`. The final row `n = #f`
    /// carries only the terminal walk value and the totals; `pad_to` adds
    /// further rows with Upsilon held at the number of components.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool, pad_to: Option<usize>) -> Result<()> {
        let k = self.lambda.len();
        let n = self.h.len();
        if header {
            let lambdas: Vec<String> = (1..=k).map(|i| format!("Lambda_{i}")).collect();
            writeln!(out, "n,H,V,{},Upsilon", lambdas.join(","))?;
        }
        let totals: Vec<String> = self
            .lambda
            .iter()
            .map(|l| l.last().copied().unwrap_or(0).to_string())
            .collect();
        let comps = self.upsilon.last().copied().unwrap_or(0);
        for m in 0..n {
            let lam: Vec<String> = self.lambda.iter().map(|l| l[m].to_string()).collect();
            writeln!(out, "{m},{},{},{},{}", self.h[m], self.v[m], lam.join(","), self.upsilon[m])?;
        }
        writeln!(out, "{n},,{},{},{comps}", self.v[n], totals.join(","))?;
        for m in n + 1..=pad_to.unwrap_or(0) {
            writeln!(out, "{m},,,{},{comps}", totals.join(","))?;
        }
        Ok(())
    }
}

/// `H[n]` = depth of `u(n)`, roots at height 0.
pub fn height_process(f: &PlanarForest) -> Vec<u32> {
    f.depth.clone()
}

/// `V[0] = 0`, `V[k+1] = V[k] + c(u(k)) - 1`.
pub fn lukasiewicz(f: &PlanarForest) -> Vec<i64> {
    let mut v = Vec::with_capacity(f.len() + 1);
    let mut x = 0i64;
    v.push(x);
    for &c in &f.children {
        x += c as i64 - 1;
        v.push(x);
    }
    v
}

/// Recovers the height process from a Lukasiewicz walk:
/// `H[n] = #{k < n : V[k] = min_{k <= l <= n} V[l]}`.
pub fn height_from_walk(v: &[i64]) -> Result<Vec<u32>> {
    if v.first() != Some(&0) {
        return Err(Error::MalformedWalk(0));
    }
    let n = v.len() - 1;
    let mut h = Vec::with_capacity(n);
    // indices k < m whose value is <= every later value up to m
    let mut stack: Vec<i64> = Vec::new();
    for m in 0..n {
        if m > 0 && v[m] - v[m - 1] < -1 {
            return Err(Error::MalformedWalk(m - 1));
        }
        while stack.last().is_some_and(|&top| top > v[m]) {
            stack.pop();
        }
        h.push(stack.len() as u32);
        stack.push(v[m]);
    }
    if n > 0 && v[n] - v[n - 1] < -1 {
        return Err(Error::MalformedWalk(n - 1));
    }
    Ok(h)
}

/// `Lambda[i][n]` = number of type-`i` vertices among `u(0..=n)`.
pub fn type_counts(f: &PlanarForest) -> Vec<Vec<u32>> {
    let mut counts = vec![0u32; f.k];
    let mut out = vec![Vec::with_capacity(f.len()); f.k];
    for &t in &f.types {
        counts[t as usize] += 1;
        for (o, &c) in out.iter_mut().zip(&counts) {
            o.push(c);
        }
    }
    out
}

/// `Upsilon[n]` = 1-based component index of `u(n)`.
pub fn upsilon(f: &PlanarForest) -> Vec<u32> {
    f.component.clone()
}

/// Depth-first positions of the type-`i` vertices.
pub fn g_process(f: &PlanarForest, i: usize) -> Vec<u32> {
    (0..f.len() as u32).filter(|&v| f.types[v as usize] as usize == i).collect()
}

/// Position of the `(k+1)`-th type-`i` vertex.
pub fn g_value(f: &PlanarForest, i: usize, k: usize) -> Result<usize> {
    f.types
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t as usize == i)
        .nth(k)
        .map(|(v, _)| v)
        .ok_or(Error::TypeAbsent { ty: i, needed: k + 1 })
}

/// Filter for [`anc_count`]. `word` and `rank` refer to the ancestor's child
/// word and to the rank (0-based) of its child on the path to the vertex.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AncQuery {
    pub ty: usize,
    pub word: Option<Vec<usize>>,
    pub rank: Option<usize>,
    pub window: Option<usize>,
}

impl AncQuery {
    pub fn of_type(ty: usize) -> Self {
        AncQuery {
            ty,
            ..Default::default()
        }
    }
}

/// Number of strict ancestors of `v` matching `q`.
pub fn anc_count(f: &PlanarForest, v: usize, q: &AncQuery) -> usize {
    let dv = f.depth(v);
    let min_depth = q.window.map_or(0, |h| dv.saturating_sub(h));
    let mut below = v;
    let mut count = 0;
    for a in f.ancestors(v) {
        if f.depth(a) < min_depth {
            break;
        }
        let ok = f.type_of(a) == q.ty
            && q.word.as_ref().is_none_or(|w| f.child_word(a) == *w)
            && q.rank.is_none_or(|l| f.child_rank(below) == Some(l));
        count += ok as usize;
        below = a;
    }
    count
}

/// The subtree of descendants of `v`, as a one-component forest rooted at `v`.
pub fn fringe(f: &PlanarForest, v: usize) -> PlanarForest {
    let end = f.subtree_end(v);
    let parent = (v..end)
        .map(|u| if u == v { NONE } else { f.parent[u] - v as u32 })
        .collect();
    let types: Vec<usize> = (v..end).map(|u| f.type_of(u)).collect();
    PlanarForest::from_preorder_unchecked(parent, &types, f.k)
}

/// `f` with every strict descendant of `v` removed.
pub fn pruned(f: &PlanarForest, v: usize) -> PlanarForest {
    let end = f.subtree_end(v);
    let removed = (end - v - 1) as u32;
    let keep = (0..f.len()).filter(|&u| u <= v || u >= end);
    let mut parent = Vec::with_capacity(f.len() - removed as usize);
    let mut types = Vec::with_capacity(parent.capacity());
    for u in keep {
        let p = f.parent[u];
        parent.push(if p == NONE || p as usize <= v { p } else { p - removed });
        types.push(f.type_of(u));
    }
    PlanarForest::from_preorder_unchecked(parent, &types, f.k)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Root of type 1 with two type-2 children, each with one type-1 leaf.
    pub(crate) fn alt2_five() -> PlanarForest {
        PlanarForest::from_parents(
            &[None, Some(0), Some(1), Some(0), Some(3)],
            &[0, 1, 0, 1, 0],
            2,
        )
        .unwrap()
    }

    #[test]
    fn navigation() {
        let f = alt2_five();
        assert_eq!(f.len(), 5);
        assert_eq!(f.children(0).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(f.child_word(0), vec![1, 1]);
        assert_eq!(f.child_rank(3), Some(1));
        assert_eq!(f.ulam_harris(4), vec![1, 2, 1]);
        assert_eq!(f.subtree_end(1), 3);
        assert!(f.is_ancestor(0, 4) && !f.is_ancestor(1, 4));
        assert_eq!(f.ancestors(4).collect::<Vec<_>>(), vec![3, 0]);
    }

    #[test]
    fn rejects_non_preorder() {
        // vertex 3 attaches to 1 after the path has moved on to 2
        let bad = PlanarForest::from_parents(&[None, Some(0), Some(0), Some(1)], &[0; 4], 1);
        assert!(matches!(bad, Err(Error::Invariant { invariant: "depth-first order", .. })));
        let bad = PlanarForest::from_parents(&[Some(0)], &[0], 1);
        assert!(bad.is_err());
        let bad = PlanarForest::from_parents(&[None], &[3], 2);
        assert!(bad.is_err());
    }

    #[test]
    fn height_examples() {
        let chain = PlanarForest::from_parents(&[None, Some(0)], &[0, 0], 1).unwrap();
        assert_eq!(height_process(&chain), vec![0, 1]);
        let roots = PlanarForest::from_parents(&[None, None, None], &[0; 3], 1).unwrap();
        assert_eq!(height_process(&roots), vec![0, 0, 0]);
        assert_eq!(upsilon(&roots), vec![1, 2, 3]);
        assert_eq!(height_process(&alt2_five()), vec![0, 1, 2, 1, 2]);
    }

    #[test]
    fn walk_examples() {
        let single = PlanarForest::from_parents(&[None], &[0], 1).unwrap();
        assert_eq!(lukasiewicz(&single), vec![0, -1]);
        let cherry = PlanarForest::from_parents(&[None, Some(0), Some(0)], &[0; 3], 1).unwrap();
        assert_eq!(lukasiewicz(&cherry), vec![0, 1, 0, -1]);
        assert_eq!(lukasiewicz(&alt2_five()), vec![0, 1, 1, 0, 0, -1]);
    }

    #[test]
    fn walk_to_height_examples() {
        assert_eq!(height_from_walk(&[0, -1]).unwrap(), vec![0]);
        assert_eq!(height_from_walk(&[0, 1, 0, -1]).unwrap(), vec![0, 1, 1]);
        assert_eq!(height_from_walk(&[0, 1, 1, 0, 0, -1]).unwrap(), vec![0, 1, 2, 1, 2]);
        assert_eq!(height_from_walk(&[0, 2, 0]), Err(Error::MalformedWalk(1)));
        assert_eq!(height_from_walk(&[1, 0]), Err(Error::MalformedWalk(0)));
    }

    #[test]
    fn type_count_and_g_examples() {
        let f = alt2_five();
        let lam = type_counts(&f);
        assert_eq!(lam[0], vec![1, 1, 2, 2, 3]);
        for n in 0..5 {
            assert_eq!(lam[1][n], n as u32 + 1 - lam[0][n]);
        }
        assert_eq!(g_process(&f, 0), vec![0, 2, 4]);
        assert_eq!(g_value(&f, 0, 2), Ok(4));
        assert_eq!(g_value(&f, 0, 3), Err(Error::TypeAbsent { ty: 0, needed: 4 }));
        let mono = PlanarForest::from_parents(&[None, Some(0), Some(0)], &[0; 3], 1).unwrap();
        assert_eq!(type_counts(&mono)[0], vec![1, 2, 3]);
        assert_eq!(g_process(&mono, 0), vec![0, 1, 2]);
    }

    #[test]
    fn upsilon_two_trees() {
        let f = PlanarForest::from_parents(&[None, Some(0), None, Some(2)], &[0; 4], 1).unwrap();
        assert_eq!(upsilon(&f), vec![1, 1, 2, 2]);
        assert_eq!(f.num_components(), 2);
    }

    #[test]
    fn anc_examples() {
        let f = alt2_five();
        assert_eq!(anc_count(&f, 0, &AncQuery::of_type(0)), 0);
        assert_eq!(anc_count(&f, 4, &AncQuery::of_type(0)), 1);
        assert_eq!(anc_count(&f, 4, &AncQuery::of_type(1)), 1);
        let windowed = AncQuery {
            window: Some(0),
            ..AncQuery::of_type(0)
        };
        assert_eq!(anc_count(&f, 4, &windowed), 0);
        let with_word = AncQuery {
            word: Some(vec![1, 1]),
            rank: Some(1),
            ..AncQuery::of_type(0)
        };
        assert_eq!(anc_count(&f, 4, &with_word), 1);
        assert_eq!(anc_count(&f, 2, &with_word), 0);
    }

    #[test]
    fn fringe_and_pruned() {
        let f = alt2_five();
        assert_eq!(fringe(&f, 0), f);
        assert_eq!(pruned(&f, 0).len(), 1);
        let fr = fringe(&f, 3);
        assert_eq!(fr.type_vec(), vec![1, 0]);
        assert_eq!(fr.parents(), vec![None, Some(0)]);
        let pr = pruned(&f, 1);
        assert_eq!(pr.parents(), vec![None, Some(0), Some(0), Some(2)]);
        assert_eq!(pr.type_vec(), vec![0, 1, 1, 0]);
        assert_eq!(fr.len() + pruned(&f, 3).len(), f.len() + 1);
    }

    #[test]
    fn csv_roundtrip() {
        let f = alt2_five();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,parent,type,component\n0,-1,1,1\n"));
        let back = PlanarForest::read_csv(text.as_bytes(), Some(2)).unwrap();
        assert_eq!(back, f);
        let two = format!("# sample 1\n{text}# sample 2\n{text}");
        assert_eq!(PlanarForest::read_csv_many(two.as_bytes(), None).unwrap().len(), 2);
    }

    #[test]
    fn encodings_csv() {
        let e = Encodings::of(&alt2_five());
        let mut buf = Vec::new();
        e.write_csv(&mut buf, true, Some(6)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,H,V,Lambda_1,Lambda_2,Upsilon");
        assert_eq!(lines[1], "0,0,0,1,0,1");
        assert_eq!(lines[6], "5,,-1,3,2,1");
        assert_eq!(lines[7], "6,,,3,2,1");
    }
}
