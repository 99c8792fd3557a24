use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Scale};
use crate::autodiff::Tensor;
use crate::bandit::ARMS;
use crate::sessions::FEATURES;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: T,
    pub bias: T,
}

/// Dilated causal TCN followed by a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub layers: Vec<ConvLayer<T>>,
    pub head_weight: T,
    pub head_bias: T,
}

/// Two-layer perceptron `d → hidden → d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor<T> {
    pub hidden_weight: T,
    pub hidden_bias: T,
    pub out_weight: T,
    pub out_bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// Every learnable array, generic over what is stored per array (values,
/// graph handles, shapes). Declared order: recent, short and long encoders,
/// short and long predictors, classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub recent: Encoder<T>,
    pub short: Option<Encoder<T>>,
    pub long: Option<Encoder<T>>,
    pub short_predictor: Option<Predictor<T>>,
    pub long_predictor: Option<Predictor<T>>,
    pub classifier: Dense<T>,
}

impl<T> Encoder<T> {
    fn items(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| [&l.kernel, &l.bias])
            .chain([&self.head_weight, &self.head_bias])
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Encoder<U> {
        Encoder {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    kernel: f(&l.kernel),
                    bias: f(&l.bias),
                })
                .collect(),
            head_weight: f(&self.head_weight),
            head_bias: f(&self.head_bias),
        }
    }
}

impl<T> Predictor<T> {
    fn items(&self) -> impl Iterator<Item = &T> {
        [&self.hidden_weight, &self.hidden_bias, &self.out_weight, &self.out_bias].into_iter()
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Predictor<U> {
        Predictor {
            hidden_weight: f(&self.hidden_weight),
            hidden_bias: f(&self.hidden_bias),
            out_weight: f(&self.out_weight),
            out_bias: f(&self.out_bias),
        }
    }
}

impl<T> ModelParams<T> {
    /// Arrays in declared order.
    pub fn items(&self) -> Vec<&T> {
        let mut out: Vec<&T> = self.recent.items().collect();
        for enc in [&self.short, &self.long].into_iter().flatten() {
            out.extend(enc.items());
        }
        for pred in [&self.short_predictor, &self.long_predictor].into_iter().flatten() {
            out.extend(pred.items());
        }
        out.extend([&self.classifier.weight, &self.classifier.bias]);
        out
    }

    /// Applies `f` to every array, in declared order.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        let recent = self.recent.map(&mut f);
        let short = self.short.as_ref().map(|e| e.map(&mut f));
        let long = self.long.as_ref().map(|e| e.map(&mut f));
        let short_predictor = self.short_predictor.as_ref().map(|p| p.map(&mut f));
        let long_predictor = self.long_predictor.as_ref().map(|p| p.map(&mut f));
        let classifier = Dense {
            weight: f(&self.classifier.weight),
            bias: f(&self.classifier.bias),
        };
        ModelParams {
            recent,
            short,
            long,
            short_predictor,
            long_predictor,
            classifier,
        }
    }

    pub fn encoder(&self, scale: Scale) -> Option<&Encoder<T>> {
        match scale {
            Scale::Recent => Some(&self.recent),
            Scale::Short => self.short.as_ref(),
            Scale::Long => self.long.as_ref(),
        }
    }

    pub fn predictor(&self, scale: Scale) -> Option<&Predictor<T>> {
        match scale {
            Scale::Recent => None,
            Scale::Short => self.short_predictor.as_ref(),
            Scale::Long => self.long_predictor.as_ref(),
        }
    }
}

/// Array shapes implied by a configuration.
pub fn param_shapes(config: &ModelConfig) -> ModelParams<Vec<usize>> {
    let c = config.channels;
    let encoder = |scale: Scale| Encoder {
        layers: config
            .dilations(scale)
            .iter()
            .enumerate()
            .map(|(i, _)| ConvLayer {
                kernel: vec![c, if i == 0 { FEATURES } else { c }, config.kernel],
                bias: vec![c],
            })
            .collect(),
        head_weight: vec![config.dim(scale), c],
        head_bias: vec![config.dim(scale)],
    };
    let predictor = |scale: Scale| Predictor {
        hidden_weight: vec![config.predictor_hidden, config.dim(scale)],
        hidden_bias: vec![config.predictor_hidden],
        out_weight: vec![config.dim(scale), config.predictor_hidden],
        out_bias: vec![config.dim(scale)],
    };
    let has = |s| config.has(s);
    ModelParams {
        recent: encoder(Scale::Recent),
        short: has(Scale::Short).then(|| encoder(Scale::Short)),
        long: has(Scale::Long).then(|| encoder(Scale::Long)),
        short_predictor: has(Scale::Short).then(|| predictor(Scale::Short)),
        long_predictor: has(Scale::Long).then(|| predictor(Scale::Long)),
        classifier: Dense {
            weight: vec![ARMS, config.embedding_dim()],
            bias: vec![ARMS],
        },
    }
}

const CONV_BIAS_INIT: f64 = 0.01;

impl ModelParams<Tensor> {
    /// Convolution kernels get He-uniform `±√(6/fan_in)` with biases of
    /// `CONV_BIAS_INIT`; dense weights and their biases get uniform
    /// `±1/√fan_in`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = 1usize;
        let mut conv = false;
        Ok(param_shapes(config).map(|shape| {
            if shape.len() >= 2 {
                fan_in = shape[1..].iter().product();
                conv = shape.len() == 3;
            }
            let n = shape.iter().product();
            if conv && shape.len() == 1 {
                return Tensor::new(shape.clone(), vec![CONV_BIAS_INIT; n]).expect("valid shape");
            }
            let bound = if conv {
                (6.0 / fan_in as f64).sqrt()
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::new(shape.clone(), data).expect("valid shape")
        }))
    }

    pub fn num_values(&self) -> usize {
        self.items().iter().map(|t| t.len()).sum()
    }

    /// All values, concatenated in declared order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.items().into_iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = param_shapes(config);
        let expected: usize = shapes.items().iter().map(|s| s.iter().product::<usize>()).sum();
        if expected != flat.len() {
            return Err(ModelError::Config(format!(
                "configuration needs {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        Ok(shapes.map(|shape| {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape.clone(), flat[offset..offset + n].to_vec()).expect("valid shape");
            offset += n;
            t
        }))
    }

    pub fn is_finite(&self) -> bool {
        self.items().iter().all(|t| t.is_finite())
    }
}
