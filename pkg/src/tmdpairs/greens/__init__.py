"""Vectorial Green's-function model of pair generation in a layered stack."""

from .stack import IndexTable, Layer, LayeredStack, StackError, default_stack, fresnel_stack, load_stack_json
from .farfield import DetectionVector, GreensTensor, PumpField, collimated_hv, farfield_green, pump_field_in_film
from .pairs import GridSpec, QuadratureError, SourceResult, pair_amplitude, source_density_matrix
