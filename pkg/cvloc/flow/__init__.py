from .base import FlowField, FlowTrace, UpdateOperator, init_flow

__all__ = ["FlowField", "FlowTrace", "UpdateOperator", "init_flow"]
