//! Nutrient vectors, %DV conversion, portion scaling and plate aggregation.
//!
//! Units are fixed per nutrient (see [`Nutrient::unit`]); there is no runtime
//! unit algebra. A component may be *absent* when the food-composition source
//! has no value for it. Absent values propagate through [`sum_plate`] and are
//! reported as `n/a`, never as zero.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NutrientError {
    #[error("{0} has no daily-value basis")]
    NoDailyValueBasis(Nutrient),
    #[error("non-finite input: {0}")]
    NonFinite(f64),
    #[error("negative input: {0}")]
    Negative(f64),
    #[error("invalid portion `{food}`: {reason}")]
    InvalidPortion { food: String, reason: String },
    #[error("unknown nutrient `{0}`")]
    UnknownNutrient(String),
    #[error("nutrient table line {line}: {reason}")]
    Table { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nutrient {
    Calories,
    Carbohydrates,
    Fibre,
    Fat,
    Protein,
    Calcium,
    Iron,
    Sodium,
    Zinc,
    VitaminB6,
    VitaminC,
    VitaminD,
    VitaminK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Kcal,
    Gram,
    Milligram,
    InternationalUnit,
    Microgram,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Kcal => "kcal",
            Unit::Gram => "g",
            Unit::Milligram => "mg",
            Unit::InternationalUnit => "IU",
            Unit::Microgram => "mcg",
        }
    }
}

impl Nutrient {
    /// All nutrients in canonical column order.
    pub const ALL: [Nutrient; 13] = [
        Nutrient::Calories,
        Nutrient::Carbohydrates,
        Nutrient::Fibre,
        Nutrient::Fat,
        Nutrient::Protein,
        Nutrient::Calcium,
        Nutrient::Iron,
        Nutrient::Sodium,
        Nutrient::Zinc,
        Nutrient::VitaminB6,
        Nutrient::VitaminC,
        Nutrient::VitaminD,
        Nutrient::VitaminK,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn unit(self) -> Unit {
        match self {
            Nutrient::Calories => Unit::Kcal,
            Nutrient::Carbohydrates | Nutrient::Fibre | Nutrient::Fat | Nutrient::Protein => {
                Unit::Gram
            }
            Nutrient::Calcium
            | Nutrient::Iron
            | Nutrient::Sodium
            | Nutrient::Zinc
            | Nutrient::VitaminB6
            | Nutrient::VitaminC => Unit::Milligram,
            Nutrient::VitaminD => Unit::InternationalUnit,
            Nutrient::VitaminK => Unit::Microgram,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nutrient::Calories => "calories",
            Nutrient::Carbohydrates => "carbohydrates",
            Nutrient::Fibre => "fibre",
            Nutrient::Fat => "fat",
            Nutrient::Protein => "protein",
            Nutrient::Calcium => "calcium",
            Nutrient::Iron => "iron",
            Nutrient::Sodium => "sodium",
            Nutrient::Zinc => "zinc",
            Nutrient::VitaminB6 => "vitamin_b6",
            Nutrient::VitaminC => "vitamin_c",
            Nutrient::VitaminD => "vitamin_d",
            Nutrient::VitaminK => "vitamin_k",
        }
    }

    /// Column header used in nutrient tables and reports, e.g. `calcium_mg`.
    pub fn column(self) -> String {
        format!("{}_{}", self.name(), self.unit().symbol().to_ascii_lowercase())
    }
}

impl fmt::Display for Nutrient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nutrient {
    type Err = NutrientError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Nutrient::ALL
            .into_iter()
            .find(|n| n.name() == s || n.column() == s)
            .ok_or_else(|| NutrientError::UnknownNutrient(s.to_owned()))
    }
}

/// Amounts of the 13 tracked nutrients. `None` marks an absent value.
///
/// Intake estimates may carry negative components (leftovers measured larger
/// than the reference); they are kept signed for bias statistics and only
/// clamped in human-readable output via [`NutrientVector::clamped_for_display`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NutrientVector([Option<f64>; 13]);

impl Default for NutrientVector {
    fn default() -> Self {
        Self::zero()
    }
}

impl NutrientVector {
    pub fn zero() -> Self {
        Self([Some(0.0); 13])
    }

    pub fn absent() -> Self {
        Self([None; 13])
    }

    pub fn from_values(values: [Option<f64>; 13]) -> Result<Self, NutrientError> {
        for v in values.iter().flatten() {
            if !v.is_finite() {
                return Err(NutrientError::NonFinite(*v));
            }
        }
        Ok(Self(values))
    }

    /// Builds a fully populated vector from `(nutrient, amount)` pairs;
    /// unlisted nutrients are zero.
    pub fn from_pairs(pairs: &[(Nutrient, f64)]) -> Result<Self, NutrientError> {
        let mut v = Self::zero();
        for &(n, amount) in pairs {
            if !amount.is_finite() {
                return Err(NutrientError::NonFinite(amount));
            }
            v.0[n.index()] = Some(amount);
        }
        Ok(v)
    }

    pub fn get(&self, nutrient: Nutrient) -> Option<f64> {
        self.0[nutrient.index()]
    }

    pub fn with(mut self, nutrient: Nutrient, amount: Option<f64>) -> Result<Self, NutrientError> {
        if let Some(a) = amount {
            if !a.is_finite() {
                return Err(NutrientError::NonFinite(a));
            }
        }
        self.0[nutrient.index()] = amount;
        Ok(self)
    }

    pub fn values(&self) -> &[Option<f64>; 13] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Nutrient, Option<f64>)> + '_ {
        Nutrient::ALL.into_iter().map(move |n| (n, self.get(n)))
    }

    /// True when every present component is non-negative.
    pub fn is_non_negative(&self) -> bool {
        self.0.iter().flatten().all(|v| *v >= 0.0)
    }

    pub fn clamped_for_display(&self) -> Self {
        let mut out = *self;
        for v in out.0.iter_mut().flatten() {
            *v = v.max(0.0);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyValue {
    pub amount: f64,
    pub unit: Unit,
}

/// Assumed 100%-daily-value amounts, averaged across sexes for adults over 70.
#[derive(Debug, Clone, PartialEq)]
pub struct RdaTable {
    entries: [Option<DailyValue>; 13],
}

impl Default for RdaTable {
    fn default() -> Self {
        Self::over_seventy()
    }
}

impl RdaTable {
    pub fn over_seventy() -> Self {
        let mut entries = [None; 13];
        let mg = |amount| Some(DailyValue { amount, unit: Unit::Milligram });
        entries[Nutrient::Calcium.index()] = mg(1200.0);
        entries[Nutrient::Iron.index()] = mg(8.0);
        entries[Nutrient::VitaminB6.index()] = mg(1.6);
        entries[Nutrient::VitaminC.index()] = mg(82.5);
        entries[Nutrient::Zinc.index()] = mg(9.5);
        Self { entries }
    }

    pub fn daily_value(&self, nutrient: Nutrient) -> Option<DailyValue> {
        self.entries[nutrient.index()]
    }

    pub fn has_basis(&self, nutrient: Nutrient) -> bool {
        self.entries[nutrient.index()].is_some()
    }
}

/// Converts a percent-daily-value label to an absolute amount in the
/// nutrient's unit.
pub fn dv_to_absolute(
    percent_dv: f64,
    nutrient: Nutrient,
    table: &RdaTable,
) -> Result<f64, NutrientError> {
    if !percent_dv.is_finite() {
        return Err(NutrientError::NonFinite(percent_dv));
    }
    if percent_dv < 0.0 {
        return Err(NutrientError::Negative(percent_dv));
    }
    let dv = table
        .daily_value(nutrient)
        .ok_or(NutrientError::NoDailyValueBasis(nutrient))?;
    Ok(percent_dv / 100.0 * dv.amount)
}

/// Componentwise multiplication by the consumed fraction. Absent components
/// stay absent.
pub fn scale_portion(
    portion: &NutrientVector,
    fraction_consumed: f64,
) -> Result<NutrientVector, NutrientError> {
    if !fraction_consumed.is_finite() {
        return Err(NutrientError::NonFinite(fraction_consumed));
    }
    let mut out = *portion;
    for v in out.0.iter_mut().flatten() {
        *v *= fraction_consumed;
    }
    Ok(out)
}

/// Componentwise sum. A component absent in any item is absent in the total,
/// so partial sums are never reported as complete.
pub fn sum_plate(items: &[NutrientVector]) -> NutrientVector {
    let mut total = NutrientVector::zero();
    for item in items {
        for (acc, v) in total.0.iter_mut().zip(item.0.iter()) {
            *acc = match (*acc, *v) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Regular,
    Minced,
    Pureed,
}

impl FromStr for Texture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regular" => Ok(Texture::Regular),
            "minced" => Ok(Texture::Minced),
            "pureed" | "puréed" => Ok(Texture::Pureed),
            other => Err(format!("unknown texture `{other}`")),
        }
    }
}

impl fmt::Display for Texture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Texture::Regular => "regular",
            Texture::Minced => "minced",
            Texture::Pureed => "pureed",
        })
    }
}

/// One food's reference portion: nutrient content plus mass and volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortionSpec {
    pub food_name: String,
    pub nutrients_per_portion: NutrientVector,
    portion_mass_g: f64,
    portion_volume_ml: f64,
    #[serde(default)]
    pub texture: Option<Texture>,
}

impl PortionSpec {
    pub fn new(
        food_name: impl Into<String>,
        nutrients_per_portion: NutrientVector,
        portion_mass_g: f64,
        portion_volume_ml: f64,
    ) -> Result<Self, NutrientError> {
        let food_name = food_name.into();
        let invalid = |reason: &str| NutrientError::InvalidPortion {
            food: food_name.clone(),
            reason: reason.to_owned(),
        };
        if !(portion_mass_g.is_finite() && portion_mass_g > 0.0) {
            return Err(invalid("portion mass must be positive"));
        }
        if !(portion_volume_ml.is_finite() && portion_volume_ml > 0.0) {
            return Err(invalid("portion volume must be positive"));
        }
        if !nutrients_per_portion.is_non_negative() {
            return Err(invalid("portion nutrients must be non-negative"));
        }
        Ok(Self {
            food_name,
            nutrients_per_portion,
            portion_mass_g,
            portion_volume_ml,
            texture: None,
        })
    }

    pub fn with_texture(mut self, texture: Option<Texture>) -> Self {
        self.texture = texture;
        self
    }

    pub fn portion_mass_g(&self) -> f64 {
        self.portion_mass_g
    }

    pub fn portion_volume_ml(&self) -> f64 {
        self.portion_volume_ml
    }

    /// g/mL
    pub fn density(&self) -> f64 {
        self.portion_mass_g / self.portion_volume_ml
    }
}

/// Reads a nutrient table: `food_name, portion_mass_g, portion_volume_ml`,
/// then the 13 nutrient columns in [`Nutrient::ALL`] order, and an optional
/// trailing `texture` column. Empty nutrient cells are absent values.
pub fn read_nutrient_table(path: &Path) -> Result<Vec<PortionSpec>, NutrientError> {
    let file = std::fs::File::open(path).map_err(|e| NutrientError::Table {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })?;
    parse_nutrient_table(file)
}

pub fn parse_nutrient_table<R: std::io::Read>(reader: R) -> Result<Vec<PortionSpec>, NutrientError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| NutrientError::Table { line: 1, reason: e.to_string() })?
        .clone();
    let expected = nutrient_table_header(false);
    let with_texture = nutrient_table_header(true);
    let got: Vec<&str> = headers.iter().collect();
    let has_texture = if got == with_texture {
        true
    } else if got == expected {
        false
    } else {
        return Err(NutrientError::Table {
            line: 1,
            reason: format!("unexpected header; expected {}", expected.join(",")),
        });
    };

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| NutrientError::Table {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let table_err = |reason: String| NutrientError::Table { line, reason };
        let number = |i: usize| -> Result<f64, NutrientError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| table_err(format!("column {}: {e}", headers[i].to_owned())))
        };
        let mass = number(1)?;
        let volume = number(2)?;
        let mut values = [None; 13];
        for (k, slot) in values.iter_mut().enumerate() {
            let cell = &record[3 + k];
            if !cell.is_empty() {
                *slot = Some(number(3 + k)?);
            }
        }
        let nutrients = NutrientVector::from_values(values).map_err(|e| table_err(e.to_string()))?;
        let texture = if has_texture && !record[16].is_empty() {
            Some(record[16].parse::<Texture>().map_err(table_err)?)
        } else {
            None
        };
        let spec = PortionSpec::new(&record[0], nutrients, mass, volume)
            .map_err(|e| table_err(e.to_string()))?
            .with_texture(texture);
        out.push(spec);
    }
    Ok(out)
}

pub fn nutrient_table_header(with_texture: bool) -> Vec<&'static str> {
    const COLUMNS: [&str; 17] = [
        "food_name",
        "portion_mass_g",
        "portion_volume_ml",
        "calories_kcal",
        "carbohydrates_g",
        "fibre_g",
        "fat_g",
        "protein_g",
        "calcium_mg",
        "iron_mg",
        "sodium_mg",
        "zinc_mg",
        "vitamin_b6_mg",
        "vitamin_c_mg",
        "vitamin_d_iu",
        "vitamin_k_mcg",
        "texture",
    ];
    let n = if with_texture { 17 } else { 16 };
    COLUMNS[..n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn daily_values_match_table() {
        let t = RdaTable::over_seventy();
        assert_eq!(dv_to_absolute(100.0, Nutrient::Calcium, &t).unwrap(), 1200.0);
        assert_eq!(dv_to_absolute(100.0, Nutrient::Iron, &t).unwrap(), 8.0);
        assert_eq!(dv_to_absolute(100.0, Nutrient::VitaminB6, &t).unwrap(), 1.6);
        assert_eq!(dv_to_absolute(100.0, Nutrient::VitaminC, &t).unwrap(), 82.5);
        assert_eq!(dv_to_absolute(100.0, Nutrient::Zinc, &t).unwrap(), 9.5);
        assert_eq!(dv_to_absolute(0.0, Nutrient::Iron, &t).unwrap(), 0.0);
        assert_eq!(dv_to_absolute(50.0, Nutrient::VitaminC, &t).unwrap(), 41.25);
    }

    #[test]
    fn no_basis_nutrients_rejected() {
        let t = RdaTable::default();
        for n in [
            Nutrient::Fat,
            Nutrient::Carbohydrates,
            Nutrient::Fibre,
            Nutrient::Protein,
            Nutrient::Sodium,
            Nutrient::VitaminD,
            Nutrient::VitaminK,
        ] {
            assert_eq!(dv_to_absolute(10.0, n, &t), Err(NutrientError::NoDailyValueBasis(n)));
        }
        assert!(matches!(
            dv_to_absolute(f64::NAN, Nutrient::Iron, &t),
            Err(NutrientError::NonFinite(_))
        ));
    }

    #[test]
    fn scaling_cases() {
        let v = NutrientVector::from_pairs(&[(Nutrient::Calories, 180.0)]).unwrap();
        let half = scale_portion(&v, 0.5).unwrap();
        assert_eq!(half.get(Nutrient::Calories), Some(90.0));
        assert_eq!(half.get(Nutrient::Iron), Some(0.0));
        assert_eq!(scale_portion(&v, 1.0).unwrap(), v);
        assert_eq!(scale_portion(&v, 0.0).unwrap(), NutrientVector::zero());
        assert!(scale_portion(&v, f64::INFINITY).is_err());
    }

    #[test]
    fn absent_values_propagate() {
        let a = NutrientVector::zero().with(Nutrient::VitaminD, None).unwrap();
        let b = NutrientVector::from_pairs(&[(Nutrient::VitaminD, 40.0)]).unwrap();
        let total = sum_plate(&[a, b]);
        assert_eq!(total.get(Nutrient::VitaminD), None);
        assert_eq!(total.get(Nutrient::Calories), Some(0.0));
        assert_eq!(scale_portion(&a, 0.3).unwrap().get(Nutrient::VitaminD), None);
        assert_eq!(sum_plate(&[]), NutrientVector::zero());
        assert_eq!(sum_plate(&[b]), b);
    }

    #[test]
    fn portion_density() {
        let p = PortionSpec::new("rice", NutrientVector::zero(), 150.0, 200.0).unwrap();
        assert!(rel_close(p.density() * 200.0, 150.0, 1e-9));
        assert!(PortionSpec::new("x", NutrientVector::zero(), 0.0, 1.0).is_err());
        assert!(PortionSpec::new("x", NutrientVector::zero(), 1.0, -1.0).is_err());
        let neg = NutrientVector::from_pairs(&[(Nutrient::Fat, -1.0)]).unwrap();
        assert!(PortionSpec::new("x", neg, 1.0, 1.0).is_err());
    }

    #[test]
    fn table_parses_absent_cells_and_texture() {
        let csv = "food_name,portion_mass_g,portion_volume_ml,calories_kcal,carbohydrates_g,fibre_g,fat_g,protein_g,calcium_mg,iron_mg,sodium_mg,zinc_mg,vitamin_b6_mg,vitamin_c_mg,vitamin_d_iu,vitamin_k_mcg,texture\n\
                   oatmeal,200,190,150,27,4,3,5,20,1.5,100,1.1,0.1,0,,,pureed\n";
        let rows = parse_nutrient_table(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].texture, Some(Texture::Pureed));
        assert_eq!(rows[0].nutrients_per_portion.get(Nutrient::VitaminD), None);
        assert_eq!(rows[0].nutrients_per_portion.get(Nutrient::Iron), Some(1.5));
    }

    #[test]
    fn table_rejects_bad_header() {
        let err = parse_nutrient_table("food,mass\nx,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, NutrientError::Table { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn dv_conversion_is_additive(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let t = RdaTable::default();
            for n in Nutrient::ALL.into_iter().filter(|n| t.has_basis(*n)) {
                let lhs = dv_to_absolute(a, n, &t).unwrap() + dv_to_absolute(b, n, &t).unwrap();
                let rhs = dv_to_absolute(a + b, n, &t).unwrap();
                prop_assert!(rel_close(lhs, rhs, 1e-12));
            }
        }

        #[test]
        fn scaling_distributes_over_sum(
            vals in proptest::array::uniform13(0.0f64..1000.0),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let v = NutrientVector::from_values(vals.map(Some)).unwrap();
            let whole = scale_portion(&v, a + b).unwrap();
            let parts = sum_plate(&[scale_portion(&v, a).unwrap(), scale_portion(&v, b).unwrap()]);
            for n in Nutrient::ALL {
                let (x, y) = (whole.get(n).unwrap(), parts.get(n).unwrap());
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        }

        #[test]
        fn plate_sum_commutes(
            a in proptest::array::uniform13(0.0f64..1000.0),
            b in proptest::array::uniform13(0.0f64..1000.0),
        ) {
            let v = NutrientVector::from_values(a.map(Some)).unwrap();
            let w = NutrientVector::from_values(b.map(Some)).unwrap();
            prop_assert_eq!(sum_plate(&[v, w]), sum_plate(&[w, v]));
        }

        #[test]
        fn density_round_trip(m in 0.1f64..2000.0, vol in 0.1f64..2000.0) {
            let p = PortionSpec::new("f", NutrientVector::zero(), m, vol).unwrap();
            prop_assert!(rel_close(p.density() * vol, m, 1e-9));
        }
    }
}
