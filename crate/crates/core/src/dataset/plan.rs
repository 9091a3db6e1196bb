//! Dataset plan files (TOML) for the generator.
//!
//! ```toml
//! nutrient_table = "foods.csv"
//!
//! [[meal]]
//! id = "pasta"
//! group = "lunch"
//! series = 2
//! levels = [0.0, 0.25, 0.5, 0.75, 1.0]
//!
//! [[meal.class]]
//! food = "spaghetti"
//! shape = { kind = "slab", height_cm = 1.5 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{Appearance, ClassGeometry, Pattern};
use super::shapes::ShapeKind;
use super::{DatasetError, MealPlan, Rgb};
use crate::nutrient::{read_nutrient_table, PortionSpec, Texture};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDesign {
    pub food: String,
    pub shape: ShapeKind,
    #[serde(default)]
    pub color: Option<Rgb>,
    #[serde(default)]
    pub pattern: Option<Pattern>,
}

fn one() -> usize {
    1
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MealDesign {
    pub id: String,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default = "one")]
    pub series: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Restricts the meal's head to classes of this texture.
    #[serde(default)]
    pub texture: Option<Texture>,
    #[serde(rename = "class")]
    pub classes: Vec<ClassDesign>,
}

impl MealDesign {
    /// Looks every class up in `foods` and builds the plan and geometry.
    pub fn resolve(&self, foods: &[PortionSpec]) -> Result<(MealPlan, Vec<ClassGeometry>), DatasetError> {
        let mut portions = Vec::with_capacity(self.classes.len());
        let mut geometry = Vec::with_capacity(self.classes.len());
        for (k, c) in self.classes.iter().enumerate() {
            let spec = foods.iter().find(|f| f.food_name == c.food).ok_or_else(|| {
                DatasetError::InvalidPlan(format!("meal `{}`: food `{}` not in nutrient table", self.id, c.food))
            })?;
            portions.push(spec.clone());
            let appearance = match (c.color, c.pattern) {
                (None, None) => None,
                (color, pattern) => {
                    let base = Appearance::palette(k);
                    Some(Appearance {
                        base: color.unwrap_or(base.base),
                        pattern: pattern.unwrap_or(Pattern::Plain),
                    })
                }
            };
            geometry.push(ClassGeometry { shape: c.shape, appearance });
        }
        let mut plan = MealPlan::new(&self.id, portions)?;
        plan.texture_filter = self.texture;
        plan.group = self.group.clone();
        Ok((plan, geometry))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    /// Relative paths are resolved against the plan file's directory.
    pub nutrient_table: PathBuf,
    #[serde(rename = "meal")]
    pub meals: Vec<MealDesign>,
}

impl PlanFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, DatasetError> {
        let plan: PlanFile = toml::from_str(text).map_err(|e| DatasetError::Parse {
            path: origin.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_owned(),
        })?;
        let mut ids = std::collections::HashSet::new();
        for m in &plan.meals {
            if !ids.insert(m.id.as_str()) {
                return Err(DatasetError::InvalidPlan(format!("meal `{}` defined twice", m.id)));
            }
        }
        Ok(plan)
    }

    /// Reads the nutrient table and resolves every meal.
    pub fn resolve(
        &self,
        base: &Path,
    ) -> Result<Vec<(MealPlan, Vec<ClassGeometry>, &MealDesign)>, DatasetError> {
        let table = base.join(&self.nutrient_table);
        if !table.exists() {
            return Err(DatasetError::MissingFile(table));
        }
        let foods = read_nutrient_table(&table).map_err(|e| DatasetError::Parse {
            path: table.clone(),
            line: match &e {
                crate::nutrient::NutrientError::Table { line, .. } => *line,
                _ => 0,
            },
            message: e.to_string(),
        })?;
        self.meals
            .iter()
            .map(|m| m.resolve(&foods).map(|(p, g)| (p, g, m)))
            .collect()
    }
}

pub fn read_plan_file(path: &Path) -> Result<PlanFile, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    PlanFile::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nutrient::NutrientVector;

    const PLAN: &str = r#"
nutrient_table = "foods.csv"

[[meal]]
id = "breakfast"
group = "morning"
series = 3

[[meal.class]]
food = "oatmeal"
shape = { kind = "dome", height_cm = 2.5 }

[[meal.class]]
food = "toast"
shape = { kind = "toast_overhang", thickness_cm = 1.0, lift_cm = 0.6 }
color = [200, 160, 90]
"#;

    #[test]
    fn parses_and_resolves() {
        let plan = PlanFile::parse(PLAN, Path::new("plan.toml")).unwrap();
        assert_eq!(plan.meals[0].series, 3);
        assert_eq!(plan.meals[0].levels, default_levels());
        let foods = vec![
            PortionSpec::new("oatmeal", NutrientVector::zero(), 200.0, 220.0).unwrap(),
            PortionSpec::new("toast", NutrientVector::zero(), 30.0, 90.0).unwrap(),
        ];
        let (meal, geometry) = plan.meals[0].resolve(&foods).unwrap();
        assert_eq!(meal.n_classes(), 2);
        assert_eq!(meal.group.as_deref(), Some("morning"));
        assert!(geometry[0].appearance.is_none());
        assert_eq!(geometry[1].appearance.unwrap().base, [200, 160, 90]);
        assert!(plan.meals[0].resolve(&foods[..1]).is_err());
    }

    #[test]
    fn errors_carry_line() {
        let bad = "nutrient_table = \"x.csv\"\n[[meal]]\nid = 3\n";
        match PlanFile::parse(bad, Path::new("p.toml")) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
