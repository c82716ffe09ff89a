use motionmask_wasm::{analyze_json, mask_plan_json, similarity_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn analysis_has_one_entry_per_frame() {
    let v = parse(analyze_json("static:8+noise:8", 2, 4, 1).unwrap());
    assert_eq!(v["omega"].as_array().unwrap().len(), 16);
    assert_eq!(v["phi"][0].as_array().unwrap().len(), 4);
    assert_eq!(v["labels"].as_array().unwrap().len(), 16);
    assert_eq!(v["omega"][0].as_f64(), Some(0.0));
}

#[test]
fn bad_recipe_is_an_error() {
    assert!(analyze_json("wobble:3", 2, 4, 0).is_err());
    assert!(analyze_json("static:8", 2, 3, 0).is_err());
}

#[test]
fn mask_plan_respects_the_budget() {
    let all = parse(mask_plan_json("static:10+sine:2:10", 3, 8, 0, 0.0, 0.3, 1).unwrap());
    assert_eq!(all["budget"], 20);
    assert_eq!(all["positions"].as_array().unwrap().len(), 20);
    let none = parse(mask_plan_json("static:10+sine:2:10", 3, 8, 0, 1.0, 0.3, 1).unwrap());
    assert_eq!(none["positions"].as_array().unwrap().len(), 0);
    assert!(mask_plan_json("static:10", 3, 8, 0, 1.5, 0.3, 1).is_err());
}

#[test]
fn similarity_is_square_and_symmetric() {
    let v = parse(similarity_json("sine:1:6+noise:6", 2, 4, 3, 1.0).unwrap());
    let n = v["len"].as_u64().unwrap() as usize;
    let s: Vec<f64> = v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(n, 12);
    assert_eq!(s.len(), n * n);
    for i in 0..n {
        for j in 0..n {
            assert_eq!(s[i * n + j], s[j * n + i]);
        }
    }
    assert!(similarity_json("static:4", 2, 4, 0, 0.0).is_err());
}
