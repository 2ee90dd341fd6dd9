//! Ground set, menus and the canonical coordinate system.
//!
//! Items are addressed by position `0..n`. A subset of items is an `n`-bit
//! mask; menus are the nonempty subsets. Every enumeration in this crate
//! walks subsets by ascending mask value, so matrix rows and serialized
//! vectors have stable coordinates:
//!
//! * choice coordinates `(a, A)`: menus ascending, then `a ∈ A` ascending,
//!   optionally followed by the default `o` at the end of each menu block;
//! * consideration coordinates `(D, A)`: every `A ⊆ X` ascending (including
//!   the empty set), then every `D ⊆ A` ascending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported ground set.
pub const MAX_ITEMS: usize = 12;

/// Item set `X` plus the outside option `o`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceUniverse {
    items: Vec<String>,
    default_label: String,
}

impl ChoiceUniverse {
    pub fn new(items: Vec<String>, default_label: impl Into<String>) -> Result<Self> {
        let default_label = default_label.into();
        if items.is_empty() {
            return Err(Error::InvalidUniverse("universe needs at least one item".into()));
        }
        if items.len() > MAX_ITEMS {
            return Err(Error::InvalidUniverse(format!(
                "{} items exceeds the cap of {MAX_ITEMS}",
                items.len()
            )));
        }
        for (i, a) in items.iter().enumerate() {
            if items[..i].contains(a) {
                return Err(Error::InvalidUniverse(format!("duplicate item `{a}`")));
            }
        }
        if items.contains(&default_label) {
            return Err(Error::InvalidUniverse(format!(
                "default `{default_label}` collides with an item"
            )));
        }
        Ok(Self { items, default_label })
    }

    /// Items labelled `l1..ln` with default `o`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| format!("l{i}")).collect(), "o")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn default_label(&self) -> &str {
        &self.default_label
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.items.iter().position(|x| x == label)
    }

    /// Mask of the grand set `X`.
    pub fn full_mask(&self) -> u32 {
        (1u32 << self.len()) - 1
    }

    /// Number of subsets of `X`, including the empty set.
    pub fn subset_count(&self) -> usize {
        1usize << self.len()
    }

    pub fn menu_count(&self) -> usize {
        self.subset_count() - 1
    }

    pub fn grand_menu(&self) -> Menu {
        Menu(self.full_mask())
    }

    pub fn menu(&self, mask: u32) -> Result<Menu> {
        if mask == 0 || mask & !self.full_mask() != 0 {
            return Err(Error::InvalidMenu(mask));
        }
        Ok(Menu(mask))
    }

    /// Menu from 0-based item positions.
    pub fn menu_of(&self, items: &[usize]) -> Result<Menu> {
        let mut mask = 0u32;
        for &i in items {
            if i >= self.len() {
                return Err(Error::InvalidMenu(mask | (1 << i.min(31))));
            }
            mask |= 1 << i;
        }
        self.menu(mask)
    }

    pub fn describe(&self, mask: u32) -> String {
        let names: Vec<&str> = iter_bits(mask).map(|i| self.item(i)).collect();
        format!("{{{}}}", names.join(","))
    }
}

/// A nonempty subset of items, as a bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Menu(u32);

impl Menu {
    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, item: usize) -> bool {
        self.0 >> item & 1 == 1
    }

    pub fn items(self) -> impl Iterator<Item = usize> {
        iter_bits(self.0)
    }
}

/// Menus in canonical order.
pub fn enumerate_menus(universe: &ChoiceUniverse) -> Vec<Menu> {
    (1..=universe.full_mask()).map(Menu).collect()
}

/// Length of the choice vector: `∑_k k·C(n,k)`, plus one default entry per
/// menu when `include_default` is set.
pub fn choice_coordinate_count(universe: &ChoiceUniverse, include_default: bool) -> usize {
    let n = universe.len();
    let d_p: usize = (1..=n).map(|k| k * binomial(n, k)).sum();
    if include_default {
        d_p + universe.menu_count()
    } else {
        d_p
    }
}

/// Length of the consideration vector, `∑_{A⊆X} 2^{|A|} = 3^n`.
pub fn consideration_coordinate_count(universe: &ChoiceUniverse) -> usize {
    3usize.pow(universe.len() as u32)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Positions of the set bits of `mask`, ascending.
pub fn iter_bits(mask: u32) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Submasks of `mask` in ascending order, including `0` and `mask`.
pub fn submasks(mask: u32) -> impl Iterator<Item = u32> {
    // Enumerate 0..2^|mask| and scatter the bits, which yields ascending
    // submask values.
    let k = mask.count_ones();
    (0..1u32 << k).map(move |i| expand(i, mask))
}

/// Packs the bits of `sub` that sit under `mask` into the low bits.
pub fn compress(sub: u32, mask: u32) -> u32 {
    let mut out = 0;
    for (j, i) in iter_bits(mask).enumerate() {
        if sub >> i & 1 == 1 {
            out |= 1 << j;
        }
    }
    out
}

/// Inverse of [`compress`].
pub fn expand(packed: u32, mask: u32) -> u32 {
    let mut out = 0;
    for (j, i) in iter_bits(mask).enumerate() {
        if packed >> j & 1 == 1 {
            out |= 1 << i;
        }
    }
    out
}

/// Rank of `item` within `mask` (number of smaller members).
pub fn rank_in(item: usize, mask: u32) -> usize {
    (mask & ((1u32 << item) - 1)).count_ones() as usize
}

/// Index bookkeeping for the stacked choice and consideration vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetIndexer {
    n: usize,
    include_default: bool,
    choice_offset: Vec<usize>,
    consideration_offset: Vec<usize>,
    choice_len: usize,
    consideration_len: usize,
}

impl SubsetIndexer {
    pub fn new(universe: &ChoiceUniverse, include_default: bool) -> Self {
        let n = universe.len();
        let size = 1usize << n;
        let mut choice_offset = vec![usize::MAX; size];
        let mut off = 0;
        for mask in 1..size {
            choice_offset[mask] = off;
            off += mask.count_ones() as usize + usize::from(include_default);
        }
        let choice_len = off;
        let mut consideration_offset = vec![0; size];
        let mut off = 0;
        for (mask, slot) in consideration_offset.iter_mut().enumerate() {
            *slot = off;
            off += 1usize << mask.count_ones();
        }
        Self {
            n,
            include_default,
            choice_offset,
            consideration_offset,
            choice_len,
            consideration_len: off,
        }
    }

    pub fn choice_len(&self) -> usize {
        self.choice_len
    }

    pub fn consideration_len(&self) -> usize {
        self.consideration_len
    }

    /// Row of `(a, A)`; `a == n` denotes the default.
    pub fn choice_index(&self, item: usize, menu: u32) -> usize {
        debug_assert!(menu != 0);
        if item == self.n {
            assert!(self.include_default, "default rows not indexed");
            self.choice_offset[menu as usize] + menu.count_ones() as usize
        } else {
            debug_assert!(menu >> item & 1 == 1);
            self.choice_offset[menu as usize] + rank_in(item, menu)
        }
    }

    /// Row of `(D, A)`.
    pub fn consideration_index(&self, sub: u32, menu: u32) -> usize {
        debug_assert!(sub & !menu == 0);
        self.consideration_offset[menu as usize] + compress(sub, menu) as usize
    }

    /// Inverse of [`Self::choice_index`].
    pub fn choice_coordinate(&self, index: usize) -> (usize, u32) {
        let menu = match self.choice_offset[1..].partition_point(|&o| o <= index) {
            0 => unreachable!(),
            k => k as u32,
        };
        let local = index - self.choice_offset[menu as usize];
        let item = iter_bits(menu).nth(local).unwrap_or(self.n);
        (item, menu)
    }
}
