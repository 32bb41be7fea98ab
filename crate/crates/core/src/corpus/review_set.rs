use indexmap::IndexMap;

use super::ReviewRecord;

/// All review text written by one user, or received by one item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewSet {
    pub owner: String,
    pub text: String,
}

/// Per-user and per-item review sets, each in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewSets {
    pub users: Vec<ReviewSet>,
    pub items: Vec<ReviewSet>,
}

impl ReviewSets {
    pub fn user(&self, key: &str) -> Option<&ReviewSet> {
        self.users.iter().find(|s| s.owner == key)
    }

    pub fn item(&self, key: &str) -> Option<&ReviewSet> {
        self.items.iter().find(|s| s.owner == key)
    }
}

/// Concatenates review texts per user and per item, single-space separated,
/// in record order. Callers must pass training records only.
pub fn build_review_sets(records: &[ReviewRecord]) -> ReviewSets {
    let mut users: IndexMap<&str, Vec<&str>> = IndexMap::new();
    let mut items: IndexMap<&str, Vec<&str>> = IndexMap::new();
    for r in records {
        users
            .entry(r.user_id.as_str())
            .or_default()
            .push(r.review_text.as_str());
        items
            .entry(r.item_id.as_str())
            .or_default()
            .push(r.review_text.as_str());
    }
    let collect = |m: IndexMap<&str, Vec<&str>>| {
        m.into_iter()
            .map(|(owner, texts)| ReviewSet {
                owner: owner.to_string(),
                text: texts.join(" "),
            })
            .collect()
    };
    ReviewSets {
        users: collect(users),
        items: collect(items),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, t: &str) -> ReviewRecord {
        ReviewRecord {
            user_id: u.into(),
            item_id: i.into(),
            rating: 3.0,
            review_text: t.into(),
        }
    }

    #[test]
    fn user_texts_concatenated_in_order() {
        let sets = build_review_sets(&[rec("A", "x", "good"), rec("A", "y", "bad")]);
        assert_eq!(sets.user("A").unwrap().text, "good bad");
    }

    #[test]
    fn empty_review_still_creates_set() {
        let sets = build_review_sets(&[rec("U", "B", "")]);
        assert_eq!(
            sets.item("B"),
            Some(&ReviewSet {
                owner: "B".into(),
                text: String::new()
            })
        );
    }

    #[test]
    fn two_by_two() {
        let records = [
            rec("u1", "i1", "a"),
            rec("u1", "i2", "b"),
            rec("u2", "i1", "c"),
            rec("u2", "i2", "d"),
        ];
        let sets = build_review_sets(&records);
        let texts = |v: &[ReviewSet]| v.iter().map(|s| s.text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&sets.users), vec!["a b", "c d"]);
        assert_eq!(texts(&sets.items), vec!["a c", "b d"]);
    }
}
