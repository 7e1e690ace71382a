use std::path::Path;
use std::sync::Arc;

use super::machine_file::{Detail, MachineFile, PhantomFile};
use super::{LinacError, MachineDescription, Phantom};

/// `(file name, contents)` of the bundled machine files.
pub const BUILTIN_MACHINE_FILES: [(&str, &str); 2] = [
    ("varian-trilogy.toml", include_str!("../../machines/varian-trilogy.toml")),
    ("novalis.toml", include_str!("../../machines/novalis.toml")),
];

pub const BUILTIN_PHANTOM_FILES: [(&str, &str); 1] = [(
    "elliptical-phantom.toml",
    include_str!("../../machines/elliptical-phantom.toml"),
)];

/// Machines and phantoms available to a simulator instance.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub machines: Vec<Arc<MachineDescription>>,
    pub phantoms: Vec<Arc<Phantom>>,
}

impl Catalog {
    pub fn machine(&self, id: &str) -> Option<&Arc<MachineDescription>> {
        self.machines.iter().find(|m| m.id == id)
    }

    pub fn phantom(&self, id: &str) -> Option<&Arc<Phantom>> {
        self.phantoms.iter().find(|p| p.id == id)
    }

    /// Adds every `*.toml` in `dir`, dispatching on its `schema` key.
    /// Entries whose id is already present are replaced.
    pub fn load_dir(&mut self, dir: &Path, detail: Detail) -> Result<(), LinacError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p)?;
            self.add_file(&text, detail)
                .map_err(|e| LinacError::Invalid(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }

    pub fn add_file(&mut self, text: &str, detail: Detail) -> Result<(), LinacError> {
        #[derive(serde::Deserialize)]
        struct Head {
            schema: String,
        }
        let head: Head = toml::from_str(text)?;
        if head.schema == super::PHANTOM_SCHEMA {
            let p = Arc::new(PhantomFile::parse(text)?.build(detail)?);
            self.phantoms.retain(|x| x.id != p.id);
            self.phantoms.push(p);
        } else {
            let m = Arc::new(MachineFile::parse(text)?.build(detail)?);
            self.machines.retain(|x| x.id != m.id);
            self.machines.push(m);
        }
        Ok(())
    }
}

/// The bundled machines and phantom at the given tessellation detail.
pub fn builtin_catalog(detail: Detail) -> Catalog {
    let mut c = Catalog::default();
    for (name, text) in BUILTIN_MACHINE_FILES.iter().chain(BUILTIN_PHANTOM_FILES.iter()) {
        c.add_file(text, detail)
            .unwrap_or_else(|e| panic!("bundled file {name} is invalid: {e}"));
    }
    c
}

pub fn builtin_machines(detail: Detail) -> Vec<Arc<MachineDescription>> {
    builtin_catalog(detail).machines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_contents() {
        let c = builtin_catalog(Detail(0.2));
        assert!(c.machines.len() >= 2);
        assert!(!c.phantoms.is_empty());
        let ids: Vec<&str> = c.machines.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["varian-trilogy", "novalis"]);
        for m in &c.machines {
            for comp in [&m.gantry, &m.collimator, &m.couch_top, &m.couch_base] {
                assert!(comp.shape.mesh().is_watertight());
            }
            for a in &m.attachments {
                assert!(a.shape.mesh().is_watertight(), "{}", a.id);
            }
        }
        assert!(c.phantoms[0].shape.mesh().is_watertight());
    }

    #[test]
    fn full_detail_scene_is_about_100k_triangles() {
        for m in builtin_machines(Detail::default()) {
            let n = m.basic_triangle_count();
            assert!((80_000..=130_000).contains(&n), "{}: {n}", m.id);
        }
        let coarse = builtin_machines(Detail(0.1));
        assert!(coarse[0].basic_triangle_count() < 5_000);
    }

    #[test]
    fn load_dir_reads_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let (name, text) = BUILTIN_MACHINE_FILES[1];
        std::fs::write(dir.path().join(name), text.replace("Novalis (representative)", "Custom")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let mut c = builtin_catalog(Detail(0.1));
        c.load_dir(dir.path(), Detail(0.1)).unwrap();
        assert_eq!(c.machines.len(), 2);
        assert_eq!(c.machine("novalis").unwrap().name, "Custom");
    }
}
