use nalgebra::DMatrix;
use proptest::prelude::*;
use regretctl::emit::{format_float, matrix_json, parse_matrix_json, render_json};
use serde_json::json;

proptest! {
    #[test]
    fn csv_floats_parse_back_exactly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let text = format_float(v);
        prop_assert_eq!(text.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn matrices_survive_a_json_file(
        rows in 1usize..5,
        cols in 0usize..5,
        values in proptest::collection::vec(-1e12f64..1e12, 25),
    ) {
        let m = DMatrix::from_fn(rows, cols, |i, j| values[i * 5 + j] / 3.0);
        let text = render_json(json!({ "gain": matrix_json(&m) }));
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(parse_matrix_json(&doc["gain"]).unwrap(), m);
    }
}
