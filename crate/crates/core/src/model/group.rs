use std::collections::BTreeMap;

use super::{Emergency, EntityId};

/// Emergencies owned by one entity; members run in sequence, groups in
/// parallel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmergencyGroup {
    pub entity: EntityId,
    pub members: Vec<Emergency>,
}

impl EmergencyGroup {
    pub fn is_environment(&self) -> bool {
        self.entity.is_environment()
    }
}

/// Partitions emergencies by owning entity, keeping input order inside
/// each group.
pub fn group_by_entity<'a>(
    emergencies: impl IntoIterator<Item = &'a Emergency>,
) -> BTreeMap<EntityId, EmergencyGroup> {
    let mut groups: BTreeMap<EntityId, EmergencyGroup> = BTreeMap::new();
    for e in emergencies {
        groups
            .entry(e.entity.clone())
            .or_insert_with(|| EmergencyGroup {
                entity: e.entity.clone(),
                members: Vec::new(),
            })
            .members
            .push(e.clone());
    }
    groups
}
