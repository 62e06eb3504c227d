//! Recipe-tree crafting: gather raw materials and craft intermediate items up to a target.
//!
//! Recipes are hidden at first. A successful `get`/`craft` reveals the recipes that use the
//! obtained item; a failed craft reveals that item's own recipe.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compose_observation, validate_budget, Clock, StepOutcome, STEP_REWARD};
use crate::error::{Error, Result};

const BUNDLED_RECIPES: &str = include_str!("../../data/recipes.txt");

/// Prefix of a revealed recipe line in observations.
pub const RECIPE_PREFIX: &str = "Recipe:";

/// Recipes keyed by output item. Items that are never an output are raw materials.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecipeBook {
    recipes: BTreeMap<String, Vec<String>>,
}

impl RecipeBook {
    /// Parses `output <= ingredient,ingredient` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<RecipeBook> {
        let mut recipes = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| Error::Data(format!("recipe line {}: {why}: {line:?}", n + 1));
            let (out, ins) = line.split_once("<=").ok_or_else(|| bad("missing '<='"))?;
            let out = out.trim().to_string();
            let ins: Vec<String> = ins.split(',').map(|s| s.trim().to_string()).collect();
            if out.is_empty() || ins.iter().any(String::is_empty) {
                return Err(bad("empty item name"));
            }
            if recipes.insert(out, ins).is_some() {
                return Err(bad("duplicate output"));
            }
        }
        let book = RecipeBook { recipes };
        for item in book.recipes.keys() {
            book.check_acyclic(item, &mut Vec::new())?;
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<RecipeBook> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read recipes {}: {e}", path.display())))?;
        RecipeBook::parse(&text)
    }

    /// The bundled default book.
    pub fn bundled() -> Arc<RecipeBook> {
        static BOOK: OnceLock<Arc<RecipeBook>> = OnceLock::new();
        BOOK.get_or_init(|| Arc::new(RecipeBook::parse(BUNDLED_RECIPES).expect("bundled recipes are valid")))
            .clone()
    }

    fn check_acyclic(&self, item: &str, path: &mut Vec<String>) -> Result<()> {
        if path.iter().any(|p| p == item) {
            return Err(Error::Data(format!("recipe cycle through {item:?}")));
        }
        if let Some(ins) = self.recipes.get(item) {
            path.push(item.to_string());
            for i in ins {
                self.check_acyclic(i, path)?;
            }
            path.pop();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn recipe(&self, item: &str) -> Option<&[String]> {
        self.recipes.get(item).map(Vec::as_slice)
    }

    pub fn is_raw(&self, item: &str) -> bool {
        !self.recipes.contains_key(item)
    }

    pub fn craftable(&self) -> impl Iterator<Item = &str> {
        self.recipes.keys().map(String::as_str)
    }

    /// Levels above the raw materials: 0 for raw items.
    pub fn depth(&self, item: &str) -> usize {
        match self.recipes.get(item) {
            None => 0,
            Some(ins) => 1 + ins.iter().map(|i| self.depth(i)).max().unwrap_or(0),
        }
    }

    /// Node count of the fully expanded recipe tree, one node per get or craft.
    pub fn tree_size(&self, item: &str) -> usize {
        match self.recipes.get(item) {
            None => 1,
            Some(ins) => 1 + ins.iter().map(|i| self.tree_size(i)).sum::<usize>(),
        }
    }

    /// Every item occurring in the tree of `item`, including itself.
    pub fn tree_items(&self, item: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![item.to_string()];
        while let Some(i) = stack.pop() {
            if let Some(ins) = self.recipes.get(&i) {
                stack.extend(ins.iter().cloned());
            }
            out.insert(i);
        }
        out
    }

    pub fn render_recipe(&self, item: &str) -> Option<String> {
        self.recipe(item)
            .map(|ins| format!("{item} <= {}", ins.join(",")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftConfig {
    pub book: Arc<RecipeBook>,
    pub max_depth: usize,
    pub budget: usize,
    pub target: Option<String>,
}

impl Default for CraftConfig {
    fn default() -> Self {
        CraftConfig {
            book: RecipeBook::bundled(),
            max_depth: 4,
            budget: 20,
            target: None,
        }
    }
}

impl CraftConfig {
    pub fn with_target(target: &str) -> Self {
        CraftConfig {
            target: Some(target.to_string()),
            ..CraftConfig::default()
        }
    }

    pub(crate) fn describe(&self) -> String {
        let lines: Vec<String> = self
            .book
            .craftable()
            .filter_map(|i| self.book.render_recipe(i))
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        format!(
            "craft:book={}:depth={}:budget={}:target={}",
            crate::util::fingerprint(&refs),
            self.max_depth,
            self.budget,
            self.target.as_deref().unwrap_or("")
        )
    }

    /// Targets eligible under this configuration, sorted.
    pub fn eligible_targets(&self) -> Vec<&str> {
        self.book
            .craftable()
            .filter(|t| self.book.depth(t) <= self.max_depth && self.book.tree_size(t) <= self.budget)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftState {
    book: Arc<RecipeBook>,
    target: String,
    tree: BTreeSet<String>,
    inventory: BTreeMap<String, usize>,
    pub(crate) clock: Clock,
}

impl CraftState {
    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn book(&self) -> &RecipeBook {
        &self.book
    }

    pub fn inventory(&self) -> &BTreeMap<String, usize> {
        &self.inventory
    }

    /// Gets for the raw materials of the target tree, then crafts for its other items.
    pub fn available(&self) -> Vec<String> {
        let gets = self
            .tree
            .iter()
            .filter(|i| self.book.is_raw(i))
            .map(|i| format!("get {i}"));
        let crafts = self
            .tree
            .iter()
            .filter(|i| !self.book.is_raw(i))
            .map(|i| format!("craft {i}"));
        gets.chain(crafts).collect()
    }

    /// Recipe lines for the tree items that take `item` as an ingredient.
    fn uses_of(&self, item: &str) -> Vec<String> {
        self.tree
            .iter()
            .filter(|p| {
                self.book
                    .recipe(p)
                    .is_some_and(|ins| ins.iter().any(|i| i == item))
            })
            .filter_map(|p| self.book.render_recipe(p))
            .collect()
    }

    /// Next action of a post-order walk of the target tree, reserving items already held.
    pub fn next_tree_action(&self) -> Option<String> {
        if self.clock.done {
            return None;
        }
        let mut reserve = self.inventory.clone();
        self.need(&self.target, &mut reserve)
    }

    fn need(&self, item: &str, reserve: &mut BTreeMap<String, usize>) -> Option<String> {
        if let Some(n) = reserve.get_mut(item).filter(|n| **n > 0) {
            *n -= 1;
            return None;
        }
        match self.book.recipe(item) {
            None => Some(format!("get {item}")),
            Some(ins) => {
                for i in ins {
                    if let Some(a) = self.need(i, reserve) {
                        return Some(a);
                    }
                }
                Some(format!("craft {item}"))
            }
        }
    }

    fn status(&self) -> String {
        if self.inventory.is_empty() {
            return "inventory empty".to_string();
        }
        let items: Vec<String> = self.inventory.iter().map(|(k, v)| format!("{k} x{v}")).collect();
        format!("inventory: {}", items.join(", "))
    }

    pub fn step(&mut self, action: &str) -> Result<StepOutcome> {
        self.clock.check_running()?;
        let action = action.trim();
        let mut narrative = Vec::new();
        let mut success = false;
        let mut revealed = Vec::new();
        if let Some(item) = action.strip_prefix("get ").map(str::trim) {
            if self.book.is_raw(item) && self.tree.contains(item) {
                *self.inventory.entry(item.to_string()).or_default() += 1;
                narrative.push(format!("You get {item}."));
                revealed = self.uses_of(item);
            } else if !self.book.is_raw(item) {
                narrative.push(format!("You cannot gather {item}; it has to be crafted."));
            } else {
                narrative.push(format!("There is no {item} around here."));
            }
        } else if let Some(item) = action.strip_prefix("craft ").map(str::trim) {
            match self.book.recipe(item).map(<[String]>::to_vec) {
                None => narrative.push(format!("There is no recipe for {item}.")),
                Some(ins) => {
                    let mut need: BTreeMap<&str, usize> = BTreeMap::new();
                    for i in &ins {
                        *need.entry(i.as_str()).or_default() += 1;
                    }
                    let ok = need
                        .iter()
                        .all(|(i, n)| self.inventory.get(*i).copied().unwrap_or(0) >= *n);
                    if ok {
                        for (i, n) in need {
                            let held = self.inventory.get_mut(i).expect("checked above");
                            *held -= n;
                            if *held == 0 {
                                self.inventory.remove(i);
                            }
                        }
                        *self.inventory.entry(item.to_string()).or_default() += 1;
                        narrative.push(format!("You craft {item}."));
                        if item == self.target {
                            success = true;
                            narrative.push("You crafted the target item.".to_string());
                        } else {
                            revealed = self.uses_of(item);
                        }
                    } else {
                        narrative.push(format!("You lack the ingredients for {item}."));
                        revealed = self.book.render_recipe(item).into_iter().collect();
                    }
                }
            }
        } else {
            narrative.push(format!("invalid action {action:?}."));
        }
        narrative.extend(revealed.into_iter().map(|r| format!("{RECIPE_PREFIX} {r}")));
        let exhausted = self.clock.tick(success);
        Ok(StepOutcome {
            observation: compose_observation(&narrative, &self.status(), exhausted, &self.available()),
            reward: STEP_REWARD,
            done: self.clock.done,
            success,
        })
    }
}

/// Recipe lines revealed by an observation, without their prefix, in order.
pub fn revealed_recipes(observation: &str) -> Vec<String> {
    observation
        .lines()
        .filter_map(|l| l.trim().strip_prefix(RECIPE_PREFIX))
        .map(|r| r.trim().to_string())
        .collect()
}

/// Inventory counts from a craft observation's status line.
pub fn parse_inventory(observation: &str) -> Option<BTreeMap<String, usize>> {
    let status = super::status_line(observation)?;
    if status == "inventory empty" {
        return Some(BTreeMap::new());
    }
    let body = status.strip_prefix("inventory:")?;
    let mut inv = BTreeMap::new();
    for part in body.split(", ") {
        let (item, n) = part.trim().rsplit_once(" x")?;
        inv.insert(item.to_string(), n.parse().ok()?);
    }
    Some(inv)
}

pub(crate) fn reset(config: &CraftConfig, seed: u64) -> Result<(CraftState, String, String)> {
    validate_budget(config.budget)?;
    let target = match &config.target {
        Some(t) => {
            if config.book.is_raw(t) {
                return Err(Error::invalid(format!("{t:?} has no recipe")));
            }
            t.clone()
        }
        None => {
            let eligible = config.eligible_targets();
            if eligible.is_empty() {
                return Err(Error::invalid(
                    "no craftable target fits the depth and budget limits",
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            eligible[rng.random_range(0..eligible.len())].to_string()
        }
    };
    let state = CraftState {
        tree: config.book.tree_items(&target),
        book: config.book.clone(),
        target,
        inventory: BTreeMap::new(),
        clock: Clock::new(config.budget),
    };
    let query = format!("Craft {}.", state.target);
    let obs = compose_observation(
        &["You stand at a crafting bench with an empty bag.".to_string()],
        &state.status(),
        false,
        &state.available(),
    );
    Ok((state, query, obs))
}
