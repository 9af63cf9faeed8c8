//! Property tests for routing, bags, documents and times.

use meshdevs_core::coupled::route;
use meshdevs_core::message::{canonical, ContentItem, MessageBag};
use meshdevs_core::model::{parse_model, serialize_model};
use meshdevs_core::{instantiate_behavior, SimTime};
use meshdevs_testkit::{gpt_spec, random_model, random_nested_model};
use proptest::prelude::*;
use serde_json::json;

fn items() -> impl Strategy<Value = Vec<ContentItem>> {
    prop::collection::vec((0i64..20).prop_map(|v| ContentItem::new("out", v)), 0..8)
}

fn sorted_routes(routes: Vec<(String, MessageBag)>) -> Vec<(String, Vec<ContentItem>)> {
    let mut merged: std::collections::BTreeMap<String, MessageBag> = Default::default();
    for (dst, bag) in routes {
        merged.entry(dst).or_default().extend(bag);
    }
    merged.into_iter().map(|(d, b)| (d, b.sorted_items())).collect()
}

proptest! {
    #[test]
    fn routing_is_linear(a in items(), b in items()) {
        let spec = gpt_spec();
        let bag_a: MessageBag = a.iter().cloned().collect();
        let bag_b: MessageBag = b.iter().cloned().collect();
        let both: MessageBag = a.iter().chain(b.iter()).cloned().collect();
        let mut split = route(&spec, "Gen", &bag_a).unwrap();
        split.extend(route(&spec, "Gen", &bag_b).unwrap());
        prop_assert_eq!(sorted_routes(route(&spec, "Gen", &both).unwrap()), sorted_routes(split));
    }

    #[test]
    fn transitions_ignore_bag_order(values in prop::collection::vec(0i64..6, 1..6), kind in 0usize..3, e in 1u32..40) {
        let (behavior, params, port) = [
            ("processor", json!({"service_time": 3}), "in"),
            ("buffer", json!({"delay": 2}), "in"),
            ("transducer", json!({"observation_time": 50}), "arrived"),
        ][kind].clone();
        let params = params.as_object().unwrap().clone();
        let forward: MessageBag = values.iter().map(|v| ContentItem::new(port, *v)).collect();
        let backward: MessageBag = values.iter().rev().map(|v| ContentItem::new(port, *v)).collect();
        let elapsed = SimTime::new(e as f64 * 0.5).unwrap();
        let mut a = instantiate_behavior(behavior, &params).unwrap();
        let mut b = a.clone();
        a.behavior.init();
        b.behavior.init();
        a.behavior.delta_ext(elapsed, &forward);
        b.behavior.delta_ext(elapsed, &backward);
        prop_assert_eq!(a.behavior.time_advance(), b.behavior.time_advance());
        prop_assert_eq!(a.behavior.output(), b.behavior.output());
        a.behavior.delta_int();
        b.behavior.delta_int();
        prop_assert_eq!(a.behavior.output(), b.behavior.output());
    }

    #[test]
    fn documents_round_trip(seed in 0u64..100_000, nested in any::<bool>()) {
        let doc = if nested { random_nested_model(seed) } else { random_model(seed) };
        let text = serialize_model(&doc);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_model(&back), text);
    }

    #[test]
    fn times_round_trip_through_text(v in 0.0f64..1e12) {
        let at = SimTime::new(v).unwrap();
        let json = serde_json::to_string(&at).unwrap();
        prop_assert_eq!(serde_json::from_str::<SimTime>(&json).unwrap(), at);
        prop_assert_eq!(at.to_string().parse::<SimTime>().unwrap(), at);
    }

    #[test]
    fn canonical_form_ignores_key_order(a in 0i64..100, b in "[a-z]{0,6}") {
        let x: serde_json::Value = serde_json::from_str(&format!(r#"{{"a":{a},"b":"{b}"}}"#)).unwrap();
        let y: serde_json::Value = serde_json::from_str(&format!(r#"{{"b":"{b}","a":{a}}}"#)).unwrap();
        prop_assert_eq!(canonical(&x), canonical(&y));
    }
}

#[test]
fn infinity_is_written_as_inf() {
    assert_eq!(serde_json::to_string(&SimTime::INFINITY).unwrap(), r#""inf""#);
    assert_eq!(serde_json::from_str::<SimTime>(r#""inf""#).unwrap(), SimTime::INFINITY);
}
