//! Datasets: the two-dimensional Moons and Circles problems embedded
//! isometrically into a higher-dimensional input space, MNIST from IDX
//! files, and labeled / unlabeled / validation partitioning.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::idx;
use crate::numerics::{dot, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}

/// Rows of a dataset restricted to one split. Unlabeled views carry no labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    pub inputs: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Subset {
    pub fn labeled(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} rows",
                labels.len(),
                inputs.rows()
            )));
        }
        Ok(Subset {
            inputs,
            labels: Some(labels),
        })
    }

    pub fn unlabeled(inputs: Tensor) -> Self {
        Subset {
            inputs,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::data("subset has no labels"))
    }

    pub fn select(&self, idx: &[usize]) -> Subset {
        Subset {
            inputs: self.inputs.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Concatenation; the result is labeled only if both parts are.
    pub fn concat(&self, other: &Subset) -> Result<Subset> {
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Subset {
            inputs: self.inputs.concat_rows(&other.inputs)?,
            labels,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Option<Vec<usize>>,
    splits: Vec<Split>,
    classes: usize,
}

impl Dataset {
    /// All rows tagged `split`.
    pub fn new(inputs: Tensor, labels: Option<Vec<usize>>, classes: usize, split: Split) -> Result<Self> {
        let n = inputs.rows();
        Self::with_splits(inputs, labels, classes, vec![split; n])
    }

    pub fn with_splits(
        inputs: Tensor,
        labels: Option<Vec<usize>>,
        classes: usize,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::dim("dataset inputs must be [N x I]"));
        }
        if splits.len() != inputs.rows() {
            return Err(Error::dim("one split tag per row required"));
        }
        match &labels {
            Some(l) => {
                if l.len() != inputs.rows() {
                    return Err(Error::dim("one label per row required"));
                }
                if let Some(&bad) = l.iter().find(|&&y| y >= classes) {
                    return Err(Error::data(format!("label {bad} >= {classes} classes")));
                }
            }
            None => {
                if splits.iter().any(|&s| s != Split::Unlabeled) {
                    return Err(Error::data("labeled, validation and test rows need labels"));
                }
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            splits,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Rows tagged `split`; labels are withheld for [`Split::Unlabeled`].
    pub fn view(&self, split: Split) -> Subset {
        let idx = self.indices(split);
        let inputs = self.inputs.select_rows(&idx);
        let labels = match split {
            Split::Unlabeled => None,
            _ => self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        };
        Subset { inputs, labels }
    }

    pub fn retag(mut self, split: Split) -> Result<Self> {
        if self.labels.is_none() && split != Split::Unlabeled {
            return Err(Error::data("cannot tag unlabeled rows as labeled"));
        }
        self.splits.iter_mut().for_each(|s| *s = split);
        Ok(self)
    }
}

/// Points in the plane with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Points2 {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

impl Points2 {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn class(&self, label: usize) -> impl Iterator<Item = &[f64; 2]> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == label)
            .map(|(p, _)| p)
    }
}

/// Two interleaved half circles without noise: label 0 on
/// `(cos t, sin t)`, label 1 on `(1 − cos t, 0.5 − sin t)`, `t ~ U[0, π]`.
pub fn gen_moons(rng: &mut Rng, n_per_class: usize) -> Points2 {
    let mut points = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        let t = rng.uniform_range(0.0, std::f64::consts::PI);
        points.push([t.cos(), t.sin()]);
        labels.push(0);
    }
    for _ in 0..n_per_class {
        let t = rng.uniform_range(0.0, std::f64::consts::PI);
        points.push([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    Points2 { points, labels }
}

pub const OUTER_RADIUS: f64 = 1.0;
pub const INNER_RADIUS: f64 = 0.5;

/// Concentric circles: label 0 on radius 1, label 1 on radius 0.5, uniform angle.
pub fn gen_circles(rng: &mut Rng, n_per_class: usize) -> Points2 {
    let mut points = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (label, radius) in [(0, OUTER_RADIUS), (1, INNER_RADIUS)] {
        for _ in 0..n_per_class {
            let a = rng.uniform_range(0.0, std::f64::consts::TAU);
            points.push([radius * a.cos(), radius * a.sin()]);
            labels.push(label);
        }
    }
    Points2 { points, labels }
}

/// Linear isometric embedding of the plane: `x = pointᵀ·M + offset`, where
/// the two rows of `M` are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMap {
    matrix: Tensor,
    offset: Tensor,
}

impl EmbeddingMap {
    pub fn new(matrix: Tensor, offset: Tensor) -> Result<Self> {
        let [2, dim] = matrix.shape() else {
            return Err(Error::config(format!(
                "embedding matrix must be [2 x dim], got {:?}",
                matrix.shape()
            )));
        };
        if offset.shape() != [*dim] {
            return Err(Error::config("embedding offset length differs from dim"));
        }
        let (a, b) = (matrix.row(0), matrix.row(1));
        let err = (dot(a, a) - 1.0)
            .abs()
            .max((dot(b, b) - 1.0).abs())
            .max(dot(a, b).abs());
        if err > 1e-10 {
            return Err(Error::config(format!(
                "embedding rows are not orthonormal (error {err:e})"
            )));
        }
        Ok(EmbeddingMap { matrix, offset })
    }

    /// Gram-Schmidt on a seeded Gaussian `[2 x dim]` matrix, zero offset.
    pub fn random(rng: &mut Rng, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("embedding dimension must be >= 2"));
        }
        let g = rng.normal_tensor(&[2, dim], 1.0);
        let a = g.row(0);
        let na = dot(a, a).sqrt();
        let a: Vec<f64> = a.iter().map(|v| v / na).collect();
        let proj = dot(&a, g.row(1));
        let b: Vec<f64> = g.row(1).iter().zip(&a).map(|(v, u)| v - proj * u).collect();
        let nb = dot(&b, &b).sqrt();
        let b: Vec<f64> = b.iter().map(|v| v / nb).collect();
        Self::new(Tensor::from_rows(&[a, b])?, Tensor::zeros(&[dim]))
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn offset(&self) -> &Tensor {
        &self.offset
    }

    pub fn embed_point(&self, p: [f64; 2]) -> Vec<f64> {
        let (a, b) = (self.matrix.row(0), self.matrix.row(1));
        self.offset
            .data()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(o, (u, v))| o + p[0] * u + p[1] * v)
            .collect()
    }
}

/// Embeds every point, `[N x dim]`.
pub fn embed_100d(points: &[[f64; 2]], map: &EmbeddingMap) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = points.iter().map(|&p| map.embed_point(p)).collect();
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, map.dim()]));
    }
    Tensor::from_rows(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTask {
    Moons,
    Circles,
}

impl SyntheticTask {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moons" => Some(SyntheticTask::Moons),
            "circles" => Some(SyntheticTask::Circles),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticTask::Moons => "moons",
            SyntheticTask::Circles => "circles",
        }
    }

    pub fn sample(self, rng: &mut Rng, n_per_class: usize) -> Points2 {
        match self {
            SyntheticTask::Moons => gen_moons(rng, n_per_class),
            SyntheticTask::Circles => gen_circles(rng, n_per_class),
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sizes for one synthetic repetition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSizes {
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
}

impl Default for SyntheticSizes {
    /// 16 training points, 1000 validation and 1000 test points, 100 dims.
    fn default() -> Self {
        SyntheticSizes {
            train_per_class: 8,
            validation_per_class: 500,
            test_per_class: 500,
            dim: 100,
        }
    }
}

/// One draw of a synthetic experiment: a fresh embedding plus train,
/// validation and test samples, all determined by `seed`.
#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub task: SyntheticTask,
    pub seed: u64,
    pub embedding: EmbeddingMap,
    pub train: Points2,
    pub validation: Points2,
    pub test: Points2,
}

impl SyntheticProblem {
    pub fn generate(task: SyntheticTask, seed: u64, sizes: SyntheticSizes) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let embedding = EmbeddingMap::random(&mut rng.fork(), sizes.dim)?;
        let train = task.sample(&mut rng.fork(), sizes.train_per_class);
        let validation = task.sample(&mut rng.fork(), sizes.validation_per_class);
        let test = task.sample(&mut rng.fork(), sizes.test_per_class);
        Ok(SyntheticProblem {
            task,
            seed,
            embedding,
            train,
            validation,
            test,
        })
    }

    pub fn embed(&self, points: &Points2) -> Result<Subset> {
        Subset::labeled(embed_100d(&points.points, &self.embedding)?, points.labels.clone())
    }

    pub fn train_set(&self) -> Result<Subset> {
        self.embed(&self.train)
    }

    pub fn validation_set(&self) -> Result<Subset> {
        self.embed(&self.validation)
    }

    pub fn test_set(&self) -> Result<Subset> {
        self.embed(&self.test)
    }
}

/// CSV with header `x0,..,x{I-1},label`; values use round-trip formatting.
pub fn write_csv<W: Write>(out: &mut W, inputs: &Tensor, labels: &[usize]) -> std::io::Result<()> {
    let header: Vec<String> = (0..inputs.cols()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{},label", header.join(","))?;
    for (row, label) in inputs.row_iter().zip(labels) {
        for v in row {
            write!(out, "{v},")?;
        }
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// MNIST images and labels, scaled to `[0, 1]` and tagged [`Split::Labeled`].
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = idx::parse(&idx::read_file(images_path)?, idx::IMAGES_MAGIC, images_path)?;
    let labels = idx::parse(&idx::read_file(labels_path)?, idx::LABELS_MAGIC, labels_path)?;
    mnist_from_arrays(&images, &labels, labels_path)
}

pub fn mnist_from_arrays(images: &idx::IdxArray, labels: &idx::IdxArray, labels_path: &Path) -> Result<Dataset> {
    let n = images.dims[0];
    let dim = images.dims[1] * images.dims[2];
    if labels.dims[0] != n {
        return Err(Error::data(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    if let Some(pos) = labels.data.iter().position(|&y| y > 9) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 8 + pos,
            reason: format!("label {} outside 0..9", labels.data[pos]),
        });
    }
    let inputs = Tensor::matrix(
        n,
        dim,
        images.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let labels = labels.data.iter().map(|&y| usize::from(y)).collect();
    Dataset::new(inputs, Some(labels), 10, Split::Labeled)
}

/// Finds `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` in `dir`.
pub fn mnist_paths(dir: &Path, prefix: &str) -> Result<(PathBuf, PathBuf)> {
    let find = |stem: &str| -> Result<PathBuf> {
        [stem.to_string(), format!("{stem}.gz")]
            .iter()
            .map(|name| dir.join(name))
            .find(|p| p.exists())
            .ok_or_else(|| Error::data(format!("{} not found in {}", stem, dir.display())))
    };
    Ok((
        find(&format!("{prefix}-images-idx3-ubyte"))?,
        find(&format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

/// Tags `n_labeled` class-stratified rows as labeled, `n_validation` further
/// random rows as validation and everything else as unlabeled.
pub fn make_semisup_split(
    dataset: &Dataset,
    n_labeled: usize,
    n_validation: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::data("stratified split needs labels"))?;
    let n = dataset.len();
    if n_labeled + n_validation > n {
        return Err(Error::data(format!(
            "{n_labeled} labeled + {n_validation} validation exceeds {n} rows"
        )));
    }
    let classes = dataset.classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut class_order: Vec<usize> = (0..classes).collect();
    rng.shuffle(&mut class_order);
    let base = n_labeled / classes;
    let extra = n_labeled % classes;
    let mut splits = vec![Split::Unlabeled; n];
    for (rank, &c) in class_order.iter().enumerate() {
        let quota = base + usize::from(rank < extra);
        let members = &mut by_class[c];
        if members.len() < quota {
            return Err(Error::data(format!(
                "class {c} has {} rows, {quota} labeled rows requested",
                members.len()
            )));
        }
        rng.shuffle(members);
        for &i in &members[..quota] {
            splits[i] = Split::Labeled;
        }
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| splits[i] == Split::Unlabeled).collect();
    rng.shuffle(&mut rest);
    for &i in &rest[..n_validation] {
        splits[i] = Split::Validation;
    }
    Dataset::with_splits(
        dataset.inputs.clone(),
        dataset.labels.clone(),
        classes,
        splits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_lie_on_their_arcs() {
        let pts = gen_moons(&mut Rng::new(1), 8);
        assert_eq!(pts.len(), 16);
        for p in pts.class(0) {
            assert!((p[0].powi(2) + p[1].powi(2) - 1.0).abs() < 1e-9);
            assert!(p[1] >= 0.0);
        }
        for p in pts.class(1) {
            assert!(((1.0 - p[0]).powi(2) + (0.5 - p[1]).powi(2) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn moons_are_uniform_in_arc_length() {
        let pts = gen_moons(&mut Rng::new(2), 10_000);
        let mut t: Vec<f64> = pts
            .class(0)
            .map(|p| p[1].atan2(p[0]) / std::f64::consts::PI)
            .collect();
        t.sort_by(f64::total_cmp);
        let n = t.len() as f64;
        let ks = t
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i as f64 + 1.0) / n - v).abs().max((v - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn circles_radii() {
        let pts = gen_circles(&mut Rng::new(3), 8);
        for (p, &l) in pts.points.iter().zip(&pts.labels) {
            let r = (p[0].powi(2) + p[1].powi(2)).sqrt();
            let expected = if l == 0 { OUTER_RADIUS } else { INNER_RADIUS };
            assert!((r - expected).abs() < 1e-12);
        }
        assert_eq!(OUTER_RADIUS / INNER_RADIUS, 2.0);
    }

    #[test]
    fn circles_are_not_linearly_separable() {
        let pts = gen_circles(&mut Rng::new(4), 500);
        for k in 0..360 {
            let a = (k as f64).to_radians();
            let proj = |p: &[f64; 2]| p[0] * a.cos() + p[1] * a.sin();
            let (min0, max0) = pts
                .class(0)
                .map(proj)
                .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let (min1, max1) = pts
                .class(1)
                .map(proj)
                .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
            // the inner class projects inside the outer class's range
            assert!(min0 < min1 && max1 < max0, "direction {k} separates");
        }
    }

    #[test]
    fn synthetic_sizes() {
        let prob = SyntheticProblem::generate(SyntheticTask::Circles, 5, SyntheticSizes::default())
            .unwrap();
        assert_eq!(prob.train.len(), 16);
        assert_eq!(prob.test.len(), 1000);
        assert_eq!(prob.train_set().unwrap().inputs.shape(), &[16, 100]);
        let again =
            SyntheticProblem::generate(SyntheticTask::Circles, 5, SyntheticSizes::default()).unwrap();
        assert_eq!(again.train, prob.train);
        assert_eq!(again.embedding, prob.embedding);
    }

    #[test]
    fn embedding_is_an_isometry() {
        let mut rng = Rng::new(6);
        let map = EmbeddingMap::random(&mut rng, 100).unwrap();
        let pts = gen_moons(&mut rng, 20);
        let x = embed_100d(&pts.points, &map).unwrap();
        for i in 0..pts.len() {
            for j in 0..i {
                let d2 = ((pts.points[i][0] - pts.points[j][0]).powi(2)
                    + (pts.points[i][1] - pts.points[j][1]).powi(2))
                .sqrt();
                let diff = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2));
                let d100 = diff.sum::<f64>().sqrt();
                assert!((d2 - d100).abs() < 1e-10);
            }
        }
        assert_eq!(map.embed_point([0.0, 0.0]), map.offset().data());
    }

    #[test]
    fn embedded_training_matrix_has_rank_two() {
        let prob = SyntheticProblem::generate(SyntheticTask::Moons, 9, SyntheticSizes::default())
            .unwrap();
        let x = prob.train_set().unwrap().inputs;
        let n = x.rows();
        let mut centered = x.clone();
        for j in 0..x.cols() {
            let m: f64 = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            for i in 0..n {
                centered.set(i, j, x.get(i, j) - m);
            }
        }
        let gram = centered.matmul_nt(&centered).unwrap();
        let (values, _) = crate::oracles::symmetric_eigen(&gram).unwrap();
        let top = values[0];
        let rank = values.iter().filter(|&&v| v > 1e-9 * top).count();
        assert_eq!(rank, 2);
    }

    #[test]
    fn rejects_non_orthonormal_embedding() {
        let m = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]).unwrap();
        assert!(matches!(
            EmbeddingMap::new(m, Tensor::zeros(&[3])),
            Err(Error::Config(_))
        ));
    }

    fn toy_dataset(n: usize, classes: usize) -> Dataset {
        let inputs = Tensor::matrix(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(inputs, Some(labels), classes, Split::Labeled).unwrap()
    }

    #[test]
    fn semisup_split_sizes() {
        let ds = toy_dataset(60_000, 10);
        let split = make_semisup_split(&ds, 100, 1000, &mut Rng::new(1)).unwrap();
        assert_eq!(split.count(Split::Labeled), 100);
        assert_eq!(split.count(Split::Validation), 1000);
        assert_eq!(split.count(Split::Unlabeled), 58_900);
        assert!(split.view(Split::Unlabeled).labels.is_none());

        let full = make_semisup_split(&ds, 60_000, 0, &mut Rng::new(1)).unwrap();
        assert_eq!(full.count(Split::Labeled), 60_000);
    }

    #[test]
    fn semisup_split_is_stratified_and_deterministic() {
        let ds = toy_dataset(1000, 10);
        let a = make_semisup_split(&ds, 23, 50, &mut Rng::new(7)).unwrap();
        let b = make_semisup_split(&ds, 23, 50, &mut Rng::new(7)).unwrap();
        assert_eq!(a.splits(), b.splits());
        let labels = a.view(Split::Labeled).labels.unwrap();
        let mut counts = [0usize; 10];
        labels.iter().for_each(|&y| counts[y] += 1);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn semisup_split_errors() {
        let ds = toy_dataset(30, 3);
        assert!(make_semisup_split(&ds, 20, 20, &mut Rng::new(1)).is_err());
        // one class with too few rows
        let inputs = Tensor::zeros(&[5, 1]);
        let ds = Dataset::new(inputs, Some(vec![0, 0, 0, 0, 1]), 2, Split::Labeled).unwrap();
        assert!(matches!(
            make_semisup_split(&ds, 4, 0, &mut Rng::new(1)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn csv_header() {
        let x = Tensor::from_rows(&[[0.5, -1.0]]).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &x, &[1]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x0,x1,label\n0.5,-1,1\n");
    }
}
