use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::json;
use whatif_core::api::{to_json, ErrorBody};
use whatif_core::{Error, ErrorClass};

/// An error on its way to the client.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn not_found(what: &str, id: &str) -> Self {
        let mut details = serde_json::Map::new();
        details.insert(what.to_string(), id.into());
        Self {
            status: StatusCode::NOT_FOUND,
            body: ErrorBody::new("not_found", format!("unknown {what} `{id}`"), details.into()),
        }
    }

    pub fn busy(session: &str) -> Self {
        Self {
            status: StatusCode::TOO_MANY_REQUESTS,
            body: ErrorBody::new(
                "goal_in_progress",
                "a goal search is already running for this session",
                json!({ "session": session }),
            ),
        }
    }

    pub fn timeout(partial: serde_json::Value) -> Self {
        Self {
            status: StatusCode::REQUEST_TIMEOUT,
            body: ErrorBody::new(
                "timeout",
                "goal search hit the time limit; partial result attached",
                json!({ "partial": partial }),
            ),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody::new("internal", message, json!({})),
        }
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::RowOutOfRange { .. } => StatusCode::NOT_FOUND,
        _ => match e.class() {
            ErrorClass::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Runtime => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_for(&e),
            body: ErrorBody::from(&e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let text = serde_json::to_string_pretty(&self.body).unwrap_or_else(|_| "{}".into());
        json_text(self.status, text)
    }
}

pub fn json_text(status: StatusCode, text: String) -> Response {
    (status, [("content-type", "application/json")], text).into_response()
}

/// Finite-checked JSON response.
pub fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match to_json(value) {
        Ok(text) => json_text(status, text),
        Err(e) => ApiError::from(e).into_response(),
    }
}
