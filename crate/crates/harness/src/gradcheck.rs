//! Finite-difference checks of every tape op and of the composed tiny model.

use rand::Rng;
use vkchain_core::ot::OtParams;
use vkchain_core::{seed, PointSet, RasterImage};
use vkchain_model::{vkt_loss, Observation, Vkt, VktConfig};
use vkchain_tensor::{grad_check, grad_check_inputs, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct NamedReport {
    pub name: String,
    pub report: GradCheckReport,
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Every differentiable op with inputs drawn from `seed_value`.
fn op_cases(seed_value: u64) -> Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> {
    let mut rng = seed::rng(seed_value, "grad-check", 0);
    let r = &mut rng;
    let target = rand_tensor(r, &[3, 2]);
    vec![
        ("matmul", vec![rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[4, 5])], Box::new(|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("linear", vec![rand_tensor(r, &[5, 4]), rand_tensor(r, &[4, 3]), rand_tensor(r, &[3])], Box::new(|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap())),
        ("add", vec![rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[3, 4])], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("scale", vec![rand_tensor(r, &[3, 4])], Box::new(|t, v| t.scale(v[0], -1.7))),
        ("gelu", vec![rand_tensor(r, &[20])], Box::new(|t, v| t.gelu(v[0]))),
        ("sigmoid", vec![rand_tensor(r, &[12])], Box::new(|t, v| t.sigmoid(v[0]))),
        ("concat", vec![rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[2, 1, 4])], Box::new(|t, v| t.concat(v, 1).unwrap())),
        ("slice", vec![rand_tensor(r, &[2, 5, 3])], Box::new(|t, v| t.slice(v[0], 1, 1, 4).unwrap())),
        ("reshape", vec![rand_tensor(r, &[2, 6])], Box::new(|t, v| t.reshape(v[0], &[3, 4]).unwrap())),
        ("softmax", vec![rand_tensor(r, &[2, 3, 4])], Box::new(|t, v| t.softmax(v[0], 2).unwrap())),
        (
            "layer_norm",
            vec![rand_tensor(r, &[3, 6]), rand_tensor(r, &[6]), rand_tensor(r, &[6])],
            Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()),
        ),
        ("conv1d", vec![rand_tensor(r, &[2, 5, 3]), rand_tensor(r, &[3, 3, 2]), rand_tensor(r, &[2])], Box::new(|t, v| t.conv1d(v[0], v[1], Some(v[2])).unwrap())),
        (
            "attention",
            vec![rand_tensor(r, &[2, 3, 8]), rand_tensor(r, &[2, 5, 8]), rand_tensor(r, &[2, 5, 8])],
            Box::new(|t, v| t.attention(v[0], v[1], v[2], 2).unwrap()),
        ),
        ("gather_rows", vec![rand_tensor(r, &[4, 3])], Box::new(|t, v| t.gather_rows(v[0], &[2, 0, 2, 3]).unwrap())),
        ("mean_axis", vec![rand_tensor(r, &[2, 3, 4])], Box::new(|t, v| t.mean_axis(v[0], 1).unwrap())),
        ("sum", vec![rand_tensor(r, &[3, 2])], Box::new(|t, v| t.sum(v[0]))),
        ("mean", vec![rand_tensor(r, &[3, 2])], Box::new(|t, v| t.mean(v[0]))),
        ("mse", vec![rand_tensor(r, &[3, 2])], Box::new(move |t, v| t.mse(v[0], &target).unwrap())),
        (
            "external_loss",
            vec![rand_tensor(r, &[4])],
            Box::new(|t, v| {
                let x = t.value(v[0]).data().to_vec();
                let value = 0.5 * x.iter().map(|a| a * a).sum::<f64>();
                t.external_loss(v[0], value, x).unwrap()
            }),
        ),
    ]
}

pub fn op_suite(seed_value: u64) -> Vec<NamedReport> {
    op_cases(seed_value)
        .into_iter()
        .map(|(name, inputs, op)| NamedReport {
            name: name.to_string(),
            report: grad_check_inputs(&inputs, op, GradCheckOptions { step: 1e-5, tolerance: OP_TOLERANCE, max_entries: 256 }),
        })
        .collect()
}

/// The tiny two-view model under the EMD loss, with a non-trivial point head.
pub fn model_check(seed_value: u64) -> NamedReport {
    let config = VktConfig::tiny();
    let mut model = Vkt::<f64>::new(config.clone(), seed_value).expect("tiny config is valid");
    let mut rng = seed::rng(seed_value, "grad-check", 1);
    for name in ["point_head.fc2.w", "point_head.fc2.b"] {
        let id = model.params.id(name).expect("point head exists");
        model.params.tensor_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let size = config.image_size as u32;
    let images: Vec<RasterImage> =
        (0..2).map(|_| RasterImage::from_raw(size, size, (0..size * size * 3).map(|_| rng.random()).collect()).expect("sized buffer")).collect();
    let gt: Vec<PointSet> = (0..2 * config.T)
        .map(|_| PointSet::new((0..config.N_points).map(|_| [rng.random_range(-0.1..1.1), rng.random_range(-0.1..1.1)]).collect()))
        .collect();
    // a tightly converged plan keeps the envelope gradient exact
    let ot = OtParams { eps: 0.05, max_iters: 20_000, tol: 1e-13 };
    let mut store = model.params.clone();
    let report = grad_check(
        &mut store,
        |t, s| {
            let m = Vkt::from_params(config.clone(), s.clone()).expect("same layout");
            let obs = [Observation { instruction_id: 1, views: images.iter().collect() }];
            let out = m.forward(t, &obs).expect("valid batch");
            vkt_loss(t, out.points.expect("point head"), &gt, &ot).expect("matching sets").0
        },
        GradCheckOptions { step: 1e-5, tolerance: MODEL_TOLERANCE, max_entries: 12 },
    );
    NamedReport { name: "tiny_vkt".into(), report }
}
