"""多层热/薄波/厚波耦合系统的有限元实现。"""

__version__ = "0.1.0"
