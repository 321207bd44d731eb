"""Glue between DRF serializers and the pipeline error hierarchy."""
from core_main.exceptions import ConfigError


def flatten_errors(errors, prefix=''):
    """Flatten (possibly nested) DRF error structures into one readable line"""
    if isinstance(errors, dict):
        parts = [flatten_errors(value, f"{prefix}{name}.") for name, value in errors.items()]
        return '; '.join(part for part in parts if part)
    if isinstance(errors, list):
        if all(isinstance(item, str) for item in errors):
            return f"{prefix.rstrip('.')}: {' '.join(errors)}" if errors else ''
        parts = [flatten_errors(item, f"{prefix}{index}.") for index, item in enumerate(errors)]
        return '; '.join(part for part in parts if part)
    return f"{prefix.rstrip('.')}: {errors}"


def build_from(serializer_class, data, section, context=None):
    """
    Validate ``data`` with ``serializer_class`` and return the value its
    ``create`` builds; invalid input raises ConfigError naming ``section``
    """
    serializer = serializer_class(data={} if data is None else data, context=context or {})
    if not serializer.is_valid():
        raise ConfigError(f"{section}: {flatten_errors(serializer.errors)}")
    return serializer.save()
