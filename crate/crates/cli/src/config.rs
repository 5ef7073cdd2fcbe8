use toml::{Table, Value};

const DEFAULT: &str = include_str!("../config/default.toml");

/// Bundled thresholds, optionally overlaid by a user file with the same layout.
#[derive(Debug, Clone)]
pub struct Config {
    table: Table,
}

impl Config {
    pub fn load(user: Option<&str>) -> Result<Self, String> {
        let mut table: Table = DEFAULT.parse().expect("bundled config parses");
        if let Some(text) = user {
            let over: Table = text.parse().map_err(|e| format!("config: {e}"))?;
            for (section, v) in over {
                let Value::Table(entries) = v else {
                    return Err(format!("config: [{section}] must be a table"));
                };
                let dst = table
                    .entry(section.clone())
                    .or_insert_with(|| Value::Table(Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| format!("config: [{section}] must be a table"))?;
                dst.extend(entries);
            }
        }
        Ok(Config { table })
    }

    fn get(&self, section: &str, key: &str) -> Option<&Value> {
        self.table.get(section)?.get(key)
    }

    pub fn num(&self, section: &str, key: &str) -> f64 {
        match self.get(section, key) {
            Some(Value::Float(f)) => *f,
            Some(Value::Integer(i)) => *i as f64,
            _ => panic!("config [{section}].{key} missing or not a number"),
        }
    }

    pub fn count(&self, section: &str, key: &str) -> usize {
        self.num(section, key) as usize
    }

    pub fn text(&self, section: &str, key: &str) -> String {
        match self.get(section, key) {
            Some(Value::String(s)) => s.clone(),
            _ => panic!("config [{section}].{key} missing or not a string"),
        }
    }
}
