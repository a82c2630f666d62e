use pyo3::prelude::*;

#[pymodule]
fn rnncert_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
