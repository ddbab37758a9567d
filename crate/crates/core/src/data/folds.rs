//! Cross-validation planning: canonical, augmented, and transfer settings.

use serde::{Deserialize, Serialize};

use super::{qualify, Dataset, LabelStyle};
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

/// Train/test composition across datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// k-fold cross-validation on the target dataset only.
    Canonical,
    /// Target k-fold with every auxiliary video appended to each train side.
    Augmented,
    /// Train on all auxiliary datasets, test on the entire target.
    Transfer,
}

impl Setting {
    pub fn label(self) -> &'static str {
        match self {
            Setting::Canonical => "canonical",
            Setting::Augmented => "augmented",
            Setting::Transfer => "transfer",
        }
    }
}

/// One train/test split over qualified video ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub setting: Setting,
    pub target: String,
    pub aux: Vec<String>,
    /// Auxiliary datasets whose labels are binary 0/1, flagged so reports
    /// can note the label-style discrepancy.
    pub binary_label_aux: Vec<String>,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// No fold may hold a test video in its train list, and the test sides
    /// must together cover every target video exactly once.
    pub fn validate(&self, target_ids: &[String]) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, fold) in self.folds.iter().enumerate() {
            let train: std::collections::BTreeSet<_> = fold.train.iter().collect();
            for id in &fold.test {
                if train.contains(id) {
                    return Err(Error::Input(format!(
                        "fold {} has '{}' in both train and test",
                        i, id
                    )));
                }
                if !seen.insert(id.clone()) {
                    return Err(Error::Input(format!(
                        "video '{}' appears in multiple test folds",
                        id
                    )));
                }
            }
        }
        let expected: std::collections::BTreeSet<String> = target_ids.iter().cloned().collect();
        if seen != expected {
            return Err(Error::Input(
                "test folds do not partition the target dataset".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded shuffle, then contiguous partition into k folds of near-equal size.
pub fn kfold_splits(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = dataset.videos.len();
    if k == 0 || k > n {
        return Err(Error::Input(format!(
            "k = {} folds invalid for {} videos",
            k, n
        )));
    }
    let mut ids: Vec<String> = dataset
        .videos
        .iter()
        .map(|v| qualify(&dataset.name, &v.id))
        .collect();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut ids);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let test: Vec<String> = ids[start..start + size].to_vec();
        let train: Vec<String> = ids[..start]
            .iter()
            .chain(&ids[start + size..])
            .cloned()
            .collect();
        folds.push(Fold { train, test });
        start += size;
    }

    let plan = FoldPlan {
        k,
        setting: Setting::Canonical,
        target: dataset.name.clone(),
        aux: Vec::new(),
        binary_label_aux: Vec::new(),
        folds,
    };
    let target_ids: Vec<String> = dataset
        .videos
        .iter()
        .map(|v| qualify(&dataset.name, &v.id))
        .collect();
    plan.validate(&target_ids)?;
    Ok(plan)
}

/// Build the fold plan for a setting. Canonical ignores `aux`; augmented
/// appends every auxiliary video to each train list; transfer trains on the
/// auxiliary datasets and tests on the whole target in a single fold.
pub fn assemble_setting(
    target: &Dataset,
    aux: &[Dataset],
    setting: Setting,
    k: usize,
    seed: u64,
) -> Result<FoldPlan> {
    let aux_names: Vec<String> = aux.iter().map(|d| d.name.clone()).collect();
    let binary_label_aux: Vec<String> = aux
        .iter()
        .filter(|d| d.label_style == LabelStyle::Binary)
        .map(|d| d.name.clone())
        .collect();
    let aux_ids: Vec<String> = aux
        .iter()
        .flat_map(|d| d.videos.iter().map(|v| qualify(&d.name, &v.id)))
        .collect();
    let target_ids: Vec<String> = target
        .videos
        .iter()
        .map(|v| qualify(&target.name, &v.id))
        .collect();

    let plan = match setting {
        Setting::Canonical => kfold_splits(target, k, seed)?,
        Setting::Augmented => {
            let mut plan = kfold_splits(target, k, seed)?;
            for fold in &mut plan.folds {
                fold.train.extend(aux_ids.iter().cloned());
            }
            plan.setting = Setting::Augmented;
            plan.aux = aux_names.clone();
            plan.binary_label_aux = binary_label_aux.clone();
            plan
        }
        Setting::Transfer => {
            if aux_ids.is_empty() {
                return Err(Error::Input(
                    "transfer setting needs at least one auxiliary dataset".into(),
                ));
            }
            FoldPlan {
                k: 1,
                setting: Setting::Transfer,
                target: target.name.clone(),
                aux: aux_names,
                binary_label_aux,
                folds: vec![Fold {
                    train: aux_ids,
                    test: target_ids.clone(),
                }],
            }
        }
    };
    plan.validate(&target_ids)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LoadedVideo, SynthSpec};
    use crate::eval::UserAnnotations;
    use crate::model::{Channel, FeatureSequence};
    use crate::tensor::{Matrix, SeededRng};

    fn make_dataset(name: &str, videos: usize, label_style: LabelStyle) -> Dataset {
        let mut rng = SeededRng::new(42);
        let videos = (0..videos)
            .map(|i| {
                let features = FeatureSequence::new(
                    Channel::Visual,
                    Matrix::random_uniform(10, 4, -1.0, 1.0, &mut rng),
                )
                .unwrap();
                let annotations = UserAnnotations::new(
                    Matrix::filled(2, 10, 0.5),
                    vec![0.5; 10],
                    vec![vec![false; 10]; 2],
                )
                .unwrap();
                LoadedVideo {
                    id: format!("v{:02}", i),
                    fps: 30.0,
                    features,
                    annotations,
                }
            })
            .collect();
        Dataset {
            name: name.into(),
            label_style,
            f1_aggregation: None,
            videos,
        }
    }

    #[test]
    fn five_folds_of_twenty_five_videos() {
        let dataset = make_dataset("target", 25, LabelStyle::Continuous);
        let plan = kfold_splits(&dataset, 5, 7).unwrap();
        assert_eq!(plan.folds.len(), 5);
        let mut all_test = Vec::new();
        for fold in &plan.folds {
            assert_eq!(fold.test.len(), 5);
            assert_eq!(fold.train.len(), 20);
            all_test.extend(fold.test.clone());
        }
        all_test.sort();
        all_test.dedup();
        assert_eq!(all_test.len(), 25);
    }

    #[test]
    fn same_seed_gives_identical_plan() {
        let dataset = make_dataset("target", 11, LabelStyle::Continuous);
        let a = kfold_splits(&dataset, 4, 3).unwrap();
        let b = kfold_splits(&dataset, 4, 3).unwrap();
        assert_eq!(a, b);
        let c = kfold_splits(&dataset, 4, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_many_folds_is_an_error() {
        let dataset = make_dataset("target", 3, LabelStyle::Continuous);
        assert!(kfold_splits(&dataset, 4, 0).is_err());
        assert!(kfold_splits(&dataset, 0, 0).is_err());
    }

    #[test]
    fn augmented_appends_aux_to_every_train_side() {
        let target = make_dataset("target", 25, LabelStyle::Continuous);
        let aux = vec![
            make_dataset("aux_a", 50, LabelStyle::Binary),
            make_dataset("aux_b", 39, LabelStyle::Binary),
        ];
        let plan = assemble_setting(&target, &aux, Setting::Augmented, 5, 1).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.train.len(), 20 + 89);
            assert_eq!(fold.test.len(), 5);
            assert!(fold.test.iter().all(|id| id.starts_with("target/")));
        }
        assert_eq!(plan.binary_label_aux, vec!["aux_a", "aux_b"]);
    }

    #[test]
    fn transfer_is_a_single_whole_target_fold() {
        let target = make_dataset("target", 25, LabelStyle::Continuous);
        let aux = vec![make_dataset("aux_a", 12, LabelStyle::Continuous)];
        let plan = assemble_setting(&target, &aux, Setting::Transfer, 5, 1).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].test.len(), 25);
        assert_eq!(plan.folds[0].train.len(), 12);
        assert!(plan.folds[0]
            .train
            .iter()
            .all(|id| id.starts_with("aux_a/")));
    }

    #[test]
    fn transfer_without_aux_is_an_error() {
        let target = make_dataset("target", 5, LabelStyle::Continuous);
        assert!(assemble_setting(&target, &[], Setting::Transfer, 5, 1).is_err());
    }

    #[test]
    fn plans_survive_json_roundtrip() {
        let target = make_dataset("target", 6, LabelStyle::Continuous);
        let plan = kfold_splits(&target, 3, 9).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: FoldPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn synth_dataset_feeds_fold_planning() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            videos: 6,
            t_min: 12,
            t_max: 20,
            dim: 4,
            annotators: 3,
            seed: 11,
        };
        let manifest = crate::data::synth_dataset(&spec, dir.path()).unwrap();
        let dataset = crate::data::load_dataset(&manifest).unwrap();
        let plan = assemble_setting(&dataset, &[], Setting::Canonical, 3, 5).unwrap();
        assert_eq!(plan.folds.len(), 3);
    }
}
