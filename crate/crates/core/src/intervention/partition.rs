use std::collections::HashMap;

use super::InterventionError;
use crate::corpus::McqItem;
use crate::probing::{ProbeRecord, ProbeStatus};

/// A training item together with the base model's probe of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Probed {
    pub item: McqItem,
    pub record: ProbeRecord,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Groups {
    pub harmonious: Vec<Probed>,
    pub incompatible: Vec<Probed>,
    pub uncertain: Vec<Probed>,
}

impl Groups {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.harmonious.len(),
            self.incompatible.len(),
            self.uncertain.len(),
        )
    }
}

/// Splits records by status, keeping record order inside each group.
pub fn partition_by_status(
    records: &[ProbeRecord],
    items: &[McqItem],
) -> Result<Groups, InterventionError> {
    let index: HashMap<&str, &McqItem> = items.iter().map(|it| (it.id.as_str(), it)).collect();
    let mut groups = Groups::default();
    for rec in records {
        let item = index
            .get(rec.item_id.as_str())
            .ok_or_else(|| InterventionError::DanglingItem(rec.item_id.clone()))?;
        let probed = Probed {
            item: (*item).clone(),
            record: rec.clone(),
        };
        match rec.status {
            ProbeStatus::Harmonious => groups.harmonious.push(probed),
            ProbeStatus::Incompatible => groups.incompatible.push(probed),
            ProbeStatus::Uncertain => groups.uncertain.push(probed),
        }
    }
    if !records.is_empty() && groups.harmonious.is_empty() && groups.incompatible.is_empty() {
        tracing::warn!(n = records.len(), "every probed item is uncertain");
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{ChoiceDistribution, Letter};
    use crate::corpus::{test_item, Domain};

    fn rec(id: &str, probs: &[f64], gold: char) -> ProbeRecord {
        ProbeRecord::new(
            id,
            "m",
            ChoiceDistribution::new(probs.to_vec()).unwrap(),
            Letter::from_char(gold).unwrap(),
            0.5,
        )
    }

    #[test]
    fn groups_follow_status() {
        let items: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|id| test_item(id, Domain::History, 2, 'A'))
            .collect();
        let records = vec![
            rec("a", &[0.9, 0.1], 'A'),
            rec("b", &[0.2, 0.8], 'A'),
            rec("c", &[0.5, 0.5], 'A'),
            rec("d", &[0.7, 0.3], 'A'),
        ];
        let g = partition_by_status(&records, &items).unwrap();
        assert_eq!(g.sizes(), (2, 1, 1));
        assert_eq!(g.harmonious[1].item.id, "d");
    }

    #[test]
    fn all_uncertain_gives_empty_groups() {
        let items = vec![test_item("a", Domain::History, 2, 'A')];
        let g = partition_by_status(&[rec("a", &[0.5, 0.5], 'A')], &items).unwrap();
        assert_eq!(g.sizes(), (0, 0, 1));
    }

    #[test]
    fn dangling_record_is_an_error() {
        let err = partition_by_status(&[rec("zz", &[0.9, 0.1], 'A')], &[]).unwrap_err();
        assert!(matches!(err, InterventionError::DanglingItem(id) if id == "zz"));
    }
}
