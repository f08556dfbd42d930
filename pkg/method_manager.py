"""Method manager for the registered task inference methods."""

from typing import Any, Dict, List, Optional, Type

from loguru import logger

from base_inference import BaseTaskInference, InferenceMethod
from errors import ConfigError, UnknownMethod


class MethodManager:
    """Registry of task inference methods with config validation."""

    def __init__(self):
        self._method_registry: Dict[InferenceMethod, Type[BaseTaskInference]] = {}

    def register_method(self, method: InferenceMethod, method_class: Type[BaseTaskInference]):
        """Register a task inference implementation."""
        self._method_registry[method] = method_class
        logger.debug(f"Registered method: {method.value}")

    def get_available_methods(self) -> List[InferenceMethod]:
        """Get list of registered methods."""
        return list(self._method_registry.keys())

    def _resolve(self, name: str) -> InferenceMethod:
        try:
            method = InferenceMethod(name)
        except ValueError:
            method = None
        if method is None or method not in self._method_registry:
            raise UnknownMethod(
                f"Method '{name}' is not registered",
                suggestions=[f"Available methods: {', '.join(m.value for m in self.get_available_methods())}"],
            )
        return method

    def get_method_status(self, configs: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, Dict[str, Any]]:
        """Validate each registered method against its (possibly empty) config."""
        configs = configs or {}
        status = {}
        for method, method_class in self._method_registry.items():
            instance = method_class(configs.get(method.value, {}))
            is_valid, errors = instance.validate_config()
            status[method.value] = {
                "configured": is_valid,
                "errors": errors,
                "config_model": method_class.config_model.__name__,
            }
        return status

    def create(self, name: str, config: Optional[Dict[str, Any]] = None) -> BaseTaskInference:
        """Instantiate a method with a validated config."""
        method = self._resolve(name)
        instance = self._method_registry[method](config or {})
        is_valid, errors = instance.validate_config()
        if not is_valid:
            raise ConfigError(
                f"Invalid configuration for {method.value}",
                suggestions=[f"• {error}" for error in errors],
                component=method.value,
            )
        return instance


def default_manager() -> MethodManager:
    """Manager with the three built-in methods registered."""
    from methods.fb_il import FbIlInference
    from methods.rbfm_heavy import RbfmHeavyInference
    from methods.rbfm_light import RbfmLightInference

    manager = MethodManager()
    manager.register_method(InferenceMethod.FB_IL, FbIlInference)
    manager.register_method(InferenceMethod.RBFM_LIGHT, RbfmLightInference)
    manager.register_method(InferenceMethod.RBFM_HEAVY, RbfmHeavyInference)
    return manager
