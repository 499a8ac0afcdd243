"""Service layer: pydantic schemas, core operations, FastAPI app."""
