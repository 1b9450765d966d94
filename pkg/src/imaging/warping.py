import torch

from src.core.exceptions import DomainError
from src.imaging.schemas import FlowField, ImageTensor


def warp_batch(frames: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward warp: out[p] = frames[p + flow[p]], bilinear, border clamped.

    frames: N x C x H x W, flow: N x 2 x H x W (dx, dy) in pixels.
    """
    if frames.dim() != 4 or flow.dim() != 4 or flow.shape[1] != 2:
        raise DomainError(f"warp expects N x C x H x W frames and N x 2 x H x W flow, "
                          f"got {tuple(frames.shape)} and {tuple(flow.shape)}")
    if frames.shape[0] != flow.shape[0] or frames.shape[2:] != flow.shape[2:]:
        raise DomainError.shape_mismatch(frames.shape[2:], flow.shape[2:], "frame and flow")

    n, c, h, w = frames.shape
    flow = flow.to(dtype=frames.dtype, device=frames.device)
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=frames.dtype, device=frames.device),
        torch.arange(w, dtype=frames.dtype, device=frames.device),
        indexing="ij",
    )
    sample_x = (xs.unsqueeze(0) + flow[:, 0]).clamp(0, w - 1)
    sample_y = (ys.unsqueeze(0) + flow[:, 1]).clamp(0, h - 1)

    x0 = sample_x.floor()
    y0 = sample_y.floor()
    wx = (sample_x - x0).unsqueeze(1)
    wy = (sample_y - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = frames.reshape(n, c, h * w)

    def gather(yi: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
        index = (yi * w + xi).reshape(n, 1, h * w).expand(n, c, h * w)
        return flat.gather(2, index).reshape(n, c, h, w)

    top = (1 - wx) * gather(y0, x0) + wx * gather(y0, x1)
    bottom = (1 - wx) * gather(y1, x0) + wx * gather(y1, x1)
    return (1 - wy) * top + wy * bottom


def warp_with_flow(frame: ImageTensor, flow: FlowField) -> ImageTensor:
    if (frame.height, frame.width) != (flow.height, flow.width):
        raise DomainError.shape_mismatch((frame.height, frame.width), (flow.height, flow.width),
                                         "frame and flow")
    warped = warp_batch(frame.batch(), flow.vectors.unsqueeze(0))[0]
    return ImageTensor(data=warped, colour_space=frame.colour_space)
