"""HTTP serving layer: FastAPI app plus request/response schemas."""
