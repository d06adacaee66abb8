"""Parameter containers and the module tree.

Attribute scanning is order-preserving, so parameter and buffer names are
deterministic: a Parameter attribute is a learnable leaf, a plain Tensor
attribute is a buffer (e.g. batch-norm running statistics), a Module or a
list/tuple of modules recurses with dotted names.
"""

from __future__ import annotations

import numpy as np

from . import flops
from .tensor import Tensor, default_dtype


class Parameter(Tensor):
    """A tensor registered as a learnable leaf."""

    def __init__(self, data, requires_grad: bool = True):
        super().__init__(np.asarray(data, dtype=default_dtype()), requires_grad=requires_grad)


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Parameter:
    """Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape))


class Module:
    """Base class for layers and networks."""

    def __init__(self):
        self.training = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        counter = flops.active()
        scope = getattr(self, "_qualname", None)
        if counter is not None and scope is not None:
            counter.push(scope)
            try:
                return self.forward(*args, **kwargs)
            finally:
                counter.pop()
        return self.forward(*args, **kwargs)

    # ------------------------------------------------------------ traversal
    def _children(self):
        for name, value in self.__dict__.items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._children():
            sub = f"{prefix}.{name}" if prefix else name
            yield from child.named_modules(sub)

    def named_parameters(self, prefix: str = ""):
        for name, value in self.__dict__.items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{full}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, value in self.__dict__.items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(value, Tensor) and not isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_buffers(full)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}")

    def named_state(self):
        """Parameters followed by buffers; the checkpointed state."""
        yield from self.named_parameters()
        yield from self.named_buffers()

    # ---------------------------------------------------------------- modes
    def train(self, flag: bool = True):
        for _, m in self.named_modules():
            m.training = flag
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def assign_qualnames(self, prefix: str = "") -> None:
        """Stamp dotted path names onto modules for FLOP-ledger attribution."""
        for name, m in self.named_modules(prefix):
            m._qualname = name
