import abc

import numpy as np
from numpy.typing import NDArray


class IClassifyDigits(abc.ABC):
    @abc.abstractmethod
    def __call__(self, images: NDArray) -> NDArray[np.int_]:
        """Map a batch of 28x28 grayscale images to digit labels."""
