use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{ModelInfo, PredictionRecord, Predictor};
use crate::error::Result;
use crate::tensor_io::ImageTensor;

type Key = [u8; 32];

/// Memoises predictions per (model name, image digest).
///
/// Entries for a key are value-identical whichever writer lands last, so
/// concurrent callers need no coordination beyond the map lock.
pub struct CachingPredictor<P> {
    inner: P,
    entries: Mutex<HashMap<Key, PredictionRecord>>,
}

impl<P: Predictor> CachingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn key(&self, x: &ImageTensor) -> Key {
        let mut h = Sha256::new();
        h.update(self.inner.info().model_name.as_bytes());
        h.update([0u8]);
        for d in x.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in x.data() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

impl<P: Predictor> Predictor for CachingPredictor<P> {
    fn info(&self) -> &ModelInfo {
        self.inner.info()
    }

    fn predict(&self, x: &ImageTensor) -> Result<PredictionRecord> {
        let key = self.key(x);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let rec = self.inner.predict(x)?;
        self.entries.lock().unwrap().insert(key, rec.clone());
        Ok(rec)
    }

    fn predict_batch(&self, xs: &[ImageTensor]) -> Result<Vec<PredictionRecord>> {
        let keys: Vec<Key> = xs.iter().map(|x| self.key(x)).collect();
        let mut out: Vec<Option<PredictionRecord>> = {
            let entries = self.entries.lock().unwrap();
            keys.iter().map(|k| entries.get(k).cloned()).collect()
        };

        // Deduplicate misses so identical images in one batch cost one call.
        let mut miss_keys: Vec<Key> = Vec::new();
        let mut miss_images: Vec<ImageTensor> = Vec::new();
        for (i, slot) in out.iter().enumerate() {
            if slot.is_none() && !miss_keys.contains(&keys[i]) {
                miss_keys.push(keys[i]);
                miss_images.push(xs[i].clone());
            }
        }
        if !miss_images.is_empty() {
            let fresh = self.inner.predict_batch(&miss_images)?;
            let mut entries = self.entries.lock().unwrap();
            for (k, rec) in miss_keys.iter().zip(fresh) {
                entries.insert(*k, rec);
            }
            for (i, slot) in out.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = entries.get(&keys[i]).cloned();
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|r| r.expect("every miss was filled"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{CountingPredictor, LinearSoftmaxModel};

    #[test]
    fn repeated_images_hit_the_cache() {
        let m = LinearSoftmaxModel::new(
            "c",
            [1, 2, 1],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0; 2],
        )
        .unwrap();
        let cached = CachingPredictor::new(CountingPredictor::new(m.clone()));
        let a = ImageTensor::new(1, 2, 1, vec![0.2, 0.9]).unwrap();
        let b = ImageTensor::new(1, 2, 1, vec![0.9, 0.2]).unwrap();

        let first = cached.predict(&a).unwrap();
        assert_eq!(first, m.predict(&a).unwrap());
        let batch = cached
            .predict_batch(&[a.clone(), b.clone(), b.clone(), a])
            .unwrap();
        assert_eq!(cached.inner().calls(), 2);
        assert_eq!(batch[1], m.predict(&b).unwrap());
        assert_eq!(batch[0], first);
        assert_eq!(cached.len(), 2);
    }
}
