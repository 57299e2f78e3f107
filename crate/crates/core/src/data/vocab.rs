use std::collections::HashMap;
use std::path::Path;

use crate::error::{Result, SggError};

pub const GROUP_NAMES: [&str; 3] = ["attention", "spatial", "contacting"];

const DESK_OBJECTS: [&str; 6] = ["person", "cup", "sofa", "table", "book", "phone"];
const DESK_ATTENTION: [&str; 3] = ["looking_at", "not_looking_at", "unsure"];
const DESK_SPATIAL: [&str; 4] = ["above", "beneath", "in_front_of", "behind"];
const DESK_CONTACTING: [&str; 5] = ["holding", "touching", "sitting_on", "wiping", "twisting"];

/// Object classes plus predicates split into the three groups
/// (attention, spatial, contacting). Predicates carry a global id: group
/// offsets follow group order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    objects: Vec<String>,
    groups: [Vec<String>; 3],
    object_index: HashMap<String, usize>,
    predicate_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(objects: Vec<String>, groups: [Vec<String>; 3]) -> Result<Self> {
        if objects.len() < 2 {
            return Err(SggError::Config("need at least two object classes".into()));
        }
        if groups.iter().all(|g| g.is_empty()) {
            return Err(SggError::Config("need at least one predicate".into()));
        }
        let mut object_index = HashMap::new();
        for (i, o) in objects.iter().enumerate() {
            if object_index.insert(o.clone(), i).is_some() {
                return Err(SggError::Config(format!("duplicate object label `{o}`")));
            }
        }
        let mut predicate_index = HashMap::new();
        let mut id = 0;
        for g in &groups {
            for p in g {
                if predicate_index.insert(p.clone(), id).is_some() {
                    return Err(SggError::Config(format!("duplicate predicate label `{p}`")));
                }
                id += 1;
            }
        }
        Ok(Vocabulary {
            objects,
            groups,
            object_index,
            predicate_index,
        })
    }

    /// 6 objects and predicate groups of 3/4/5.
    pub fn desk() -> Self {
        Self::from_counts(6, [3, 4, 5]).expect("desk vocabulary")
    }

    /// Vocabulary of the requested sizes. Names come from the built-in desk
    /// lists while they last, then fall back to `<kind>_<index>`.
    pub fn from_counts(objects: usize, groups: [usize; 3]) -> Result<Self> {
        let named = |base: &[&str], n: usize, kind: &str| -> Vec<String> {
            (0..n)
                .map(|i| {
                    base.get(i)
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| format!("{kind}_{i}"))
                })
                .collect()
        };
        Self::new(
            named(&DESK_OBJECTS, objects, "object"),
            [
                named(&DESK_ATTENTION, groups[0], "attention"),
                named(&DESK_SPATIAL, groups[1], "spatial"),
                named(&DESK_CONTACTING, groups[2], "contacting"),
            ],
        )
    }

    /// Reads a vocabulary file: one `<kind> <label>` pair per line where kind
    /// is `object`, `attention`, `spatial` or `contacting`. `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SggError::io(path, e))?;
        let mut objects = Vec::new();
        let mut groups: [Vec<String>; 3] = Default::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (kind, label) = line.split_once(char::is_whitespace).ok_or_else(|| SggError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "expected `<kind> <label>`".into(),
            })?;
            let label = label.trim().to_string();
            match kind {
                "object" => objects.push(label),
                k => match GROUP_NAMES.iter().position(|g| *g == k) {
                    Some(g) => groups[g].push(label),
                    None => {
                        return Err(SggError::Parse {
                            path: path.display().to_string(),
                            line: i + 1,
                            message: format!("unknown kind `{k}`"),
                        })
                    }
                },
            }
        }
        Self::new(objects, groups)
    }

    /// The file form read by [`Vocabulary::load`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for o in &self.objects {
            s.push_str(&format!("object {o}\n"));
        }
        for (g, labels) in self.groups.iter().enumerate() {
            for l in labels {
                s.push_str(&format!("{} {l}\n", GROUP_NAMES[g]));
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| SggError::io(path, e))
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn group(&self, g: usize) -> &[String] {
        &self.groups[g]
    }

    pub fn group_sizes(&self) -> [usize; 3] {
        [self.groups[0].len(), self.groups[1].len(), self.groups[2].len()]
    }

    pub fn group_offset(&self, g: usize) -> usize {
        self.groups[..g].iter().map(Vec::len).sum()
    }

    pub fn predicate_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn group_of(&self, predicate: usize) -> usize {
        let mut acc = 0;
        for (g, labels) in self.groups.iter().enumerate() {
            acc += labels.len();
            if predicate < acc {
                return g;
            }
        }
        panic!("predicate id {predicate} out of range")
    }

    pub fn object_label(&self, id: usize) -> &str {
        &self.objects[id]
    }

    pub fn predicate_label(&self, id: usize) -> &str {
        let g = self.group_of(id);
        &self.groups[g][id - self.group_offset(g)]
    }

    pub fn predicate_labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flatten().map(String::as_str)
    }

    pub fn object_id(&self, label: &str) -> Result<usize> {
        self.object_index
            .get(label)
            .copied()
            .ok_or_else(|| SggError::Vocabulary {
                label: label.to_string(),
                kind: "object",
            })
    }

    pub fn predicate_id(&self, label: &str) -> Result<usize> {
        self.predicate_index
            .get(label)
            .copied()
            .ok_or_else(|| SggError::Vocabulary {
                label: label.to_string(),
                kind: "predicate",
            })
    }

    pub fn has_object(&self, label: &str) -> bool {
        self.object_index.contains_key(label)
    }

    pub fn has_predicate(&self, label: &str) -> bool {
        self.predicate_index.contains_key(label)
    }
}
