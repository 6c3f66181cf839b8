//! Protocol messages. The simulator treats payloads as opaque apart from
//! their kind and the number of object versions they carry.

use serde::{Deserialize, Serialize};

use crate::model::{Bitmap, Key, ObjectId, Tag, Value};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Message {
    WriteValue { key: Key, value: Value },
    AckValue { key: Key },
    /// Protocol A: writer to reader, after all values are stored.
    InformReader { key: Key, bitmap: Bitmap },
    AckInform { key: Key, tag: Tag },
    /// Algorithms B/C: writer to the coordinator.
    UpdateCoord { key: Key, bitmap: Bitmap },
    AckCoord { key: Key, tag: Tag },
    /// Carries the read set so the coordinator can compute the read tag.
    GetTagArray { ids: Vec<ObjectId> },
    TagArray { tag: Tag, keys: Vec<Key> },
    ReadValue { key: Key },
    Value { key: Key, value: Value },
    ReadValues,
    ValuesSnapshot { vals: Vec<(Key, Value)> },
    /// Protocol C, when the coordinator also stores a read object.
    #[serde(rename = "GET-TAG-ARRAY+READ-VALUES")]
    GetTagArrayReadValues { ids: Vec<ObjectId> },
    #[serde(rename = "TAG-ARRAY+VALUES-SNAPSHOT")]
    TagArraySnapshot { tag: Tag, keys: Vec<Key>, vals: Vec<(Key, Value)> },
    /// Naive baseline read request.
    ReadReq,
}

impl Message {
    /// Wire name of the message kind, as it appears in trace JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Message::WriteValue { .. } => "WRITE-VALUE",
            Message::AckValue { .. } => "ACK-VALUE",
            Message::InformReader { .. } => "INFORM-READER",
            Message::AckInform { .. } => "ACK-INFORM",
            Message::UpdateCoord { .. } => "UPDATE-COORD",
            Message::AckCoord { .. } => "ACK-COORD",
            Message::GetTagArray { .. } => "GET-TAG-ARRAY",
            Message::TagArray { .. } => "TAG-ARRAY",
            Message::ReadValue { .. } => "READ-VALUE",
            Message::Value { .. } => "VALUE",
            Message::ReadValues => "READ-VALUES",
            Message::ValuesSnapshot { .. } => "VALUES-SNAPSHOT",
            Message::GetTagArrayReadValues { .. } => "GET-TAG-ARRAY+READ-VALUES",
            Message::TagArraySnapshot { .. } => "TAG-ARRAY+VALUES-SNAPSHOT",
            Message::ReadReq => "READ-REQ",
        }
    }

    /// Number of object versions in the payload.
    pub fn versions(&self) -> usize {
        match self {
            Message::Value { .. } => 1,
            Message::ValuesSnapshot { vals } | Message::TagArraySnapshot { vals, .. } => vals.len(),
            _ => 0,
        }
    }

    /// Store snapshot carried by the payload, if any.
    pub fn snapshot(&self) -> Option<&[(Key, Value)]> {
        match self {
            Message::ValuesSnapshot { vals } | Message::TagArraySnapshot { vals, .. } => Some(vals),
            _ => None,
        }
    }

    /// Key array carried by the payload, if any.
    pub fn key_array(&self) -> Option<&[Key]> {
        match self {
            Message::TagArray { keys, .. } | Message::TagArraySnapshot { keys, .. } => Some(keys),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_matches_serde_tag() {
        let samples = vec![
            Message::WriteValue { key: Key::new(1, 1), value: Value::from("x") },
            Message::AckValue { key: Key::new(1, 1) },
            Message::InformReader { key: Key::new(1, 1), bitmap: Bitmap::all_ones(2) },
            Message::AckInform { key: Key::new(1, 1), tag: Tag(2) },
            Message::UpdateCoord { key: Key::new(1, 1), bitmap: Bitmap::all_ones(2) },
            Message::AckCoord { key: Key::new(1, 1), tag: Tag(2) },
            Message::GetTagArray { ids: vec![ObjectId(1)] },
            Message::TagArray { tag: Tag(1), keys: vec![Key::INITIAL] },
            Message::ReadValue { key: Key::INITIAL },
            Message::Value { key: Key::INITIAL, value: Value::empty() },
            Message::ReadValues,
            Message::ValuesSnapshot { vals: vec![] },
            Message::GetTagArrayReadValues { ids: vec![ObjectId(1)] },
            Message::TagArraySnapshot { tag: Tag(1), keys: vec![], vals: vec![] },
            Message::ReadReq,
        ];
        for m in samples {
            let json = serde_json::to_value(&m).unwrap();
            assert_eq!(json["kind"], m.kind(), "{m:?}");
            let back: Message = serde_json::from_value(json).unwrap();
            assert_eq!(back, m);
        }
    }
}
