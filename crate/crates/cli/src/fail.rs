use xma_core::pipeline::PipelineError;
use xma_service::ServiceError;

/// A failed command: bad input (exit 1) or a runtime problem (exit 2).
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }

    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Failure::Validation(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        Failure::Runtime(anyhow::anyhow!("{msg}"))
    }
}

impl<E: Into<PipelineError>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: PipelineError = e.into();
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

pub fn service(e: ServiceError) -> Failure {
    match e {
        ServiceError::Config(_) => Failure::Validation(e.into()),
        _ => Failure::Runtime(e.into()),
    }
}

pub fn io(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Runtime(anyhow::anyhow!("{}: {e}", path.display()))
}
