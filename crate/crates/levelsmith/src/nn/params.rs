//! Flat 64-bit parameter storage with named slices and an exact binary
//! checkpoint format.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use super::tape::NnError;

#[derive(Clone, Debug)]
struct SliceInfo {
    name: String,
    offset: usize,
    shape: Vec<usize>,
}

/// All parameters of one model as a single flat array. Slices are registered
/// once, in a fixed order, so the flat layout is reproducible.
#[derive(Clone, Debug, Default)]
pub struct ParamVector {
    data: Vec<f64>,
    slices: Vec<SliceInfo>,
    index: HashMap<String, usize>,
}

impl ParamVector {
    pub fn new() -> ParamVector {
        ParamVector::default()
    }

    /// Appends a named slice filled by `init` and returns its offset.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        mut init: impl FnMut() -> f64,
    ) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter slice `{name}` registered twice"
        );
        let offset = self.data.len();
        let len: usize = shape.iter().product();
        self.data.extend(std::iter::repeat_with(&mut init).take(len));
        self.index.insert(name.clone(), self.slices.len());
        self.slices.push(SliceInfo { name, offset, shape: shape.to_vec() });
        offset
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn info(&self, name: &str) -> Result<&SliceInfo, NnError> {
        self.index
            .get(name)
            .map(|&i| &self.slices[i])
            .ok_or_else(|| NnError::UnknownSlice(name.into()))
    }

    pub fn offset(&self, name: &str) -> Result<usize, NnError> {
        Ok(self.info(name)?.offset)
    }

    pub fn shape(&self, name: &str) -> Result<&[usize], NnError> {
        Ok(&self.info(name)?.shape)
    }

    /// View of one slice in its registered shape.
    pub fn view(&self, name: &str) -> Result<ArrayViewD<'_, f64>, NnError> {
        let info = self.info(name)?;
        let len: usize = info.shape.iter().product();
        Ok(
            ArrayViewD::from_shape(IxDyn(&info.shape), &self.data[info.offset..info.offset + len])
                .expect("registered shape matches slice"),
        )
    }

    pub fn to_array(&self, name: &str) -> Result<ArrayD<f64>, NnError> {
        Ok(self.view(name)?.to_owned())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Writes the checkpoint: magic, slice table, then raw little-endian data.
    pub fn save(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(b"LSPV0001")?;
        w.write_all(&(self.slices.len() as u32).to_le_bytes())?;
        for s in &self.slices {
            let name = s.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(s.shape.len() as u32).to_le_bytes())?;
            for &d in &s.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<ParamVector, NnError> {
        let bad = |m: &str| NnError::Checkpoint(m.into());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| bad(&e.to_string()))?;
        if &magic != b"LSPV0001" {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf).map_err(|e| bad(&e.to_string()))?;
        let n_slices = u32::from_le_bytes(u32buf) as usize;
        let mut pv = ParamVector::new();
        let mut total = 0usize;
        for _ in 0..n_slices {
            r.read_exact(&mut u32buf).map_err(|e| bad(&e.to_string()))?;
            let name_len = u32::from_le_bytes(u32buf) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|e| bad(&e.to_string()))?;
            let name = String::from_utf8(name).map_err(|_| bad("name not utf-8"))?;
            r.read_exact(&mut u32buf).map_err(|e| bad(&e.to_string()))?;
            let ndim = u32::from_le_bytes(u32buf) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                r.read_exact(&mut u64buf).map_err(|e| bad(&e.to_string()))?;
                shape.push(u64::from_le_bytes(u64buf) as usize);
            }
            let len: usize = shape.iter().product();
            pv.index.insert(name.clone(), pv.slices.len());
            pv.slices.push(SliceInfo { name, offset: total, shape });
            total += len;
        }
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut u64buf).map_err(|e| bad(&e.to_string()))?;
            data.push(f64::from_le_bytes(u64buf));
        }
        pv.data = data;
        Ok(pv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_view() {
        let mut pv = ParamVector::new();
        let mut c = 0.0;
        pv.register("a", &[2, 3], || {
            c += 1.0;
            c
        });
        pv.register("b", &[4], || 0.5);
        assert_eq!(pv.len(), 10);
        assert_eq!(pv.view("a").unwrap().shape(), &[2, 3]);
        assert_eq!(pv.view("a").unwrap()[[1, 2]], 6.0);
        assert_eq!(pv.offset("b").unwrap(), 6);
        assert!(pv.view("missing").is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut pv = ParamVector::new();
        let mut k = 0u64;
        pv.register("enc.w", &[3, 5], || {
            k += 1;
            (k as f64).sqrt() * 1e-3 - 0.002
        });
        pv.register("enc.b", &[5], || -1.5e-7);
        let mut buf = Vec::new();
        pv.save(&mut buf).unwrap();
        let back = ParamVector::load(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data(), pv.data());
        assert_eq!(back.shape("enc.w").unwrap(), &[3, 5]);
        let mut buf2 = Vec::new();
        back.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
