# Regenerates tiny_backbone.onnx, tiny_crop.png and the reference embedding (needs torch, onnx, opencv-python).
import torch, numpy as np, cv2
torch.manual_seed(0)
class Tiny(torch.nn.Module):
    def __init__(s):
        super().__init__()
        s.conv = torch.nn.Conv2d(3, 8, 3, stride=2)
        s.pool = torch.nn.AdaptiveAvgPool2d(1)
    def forward(s, x):
        return torch.flatten(s.pool(torch.relu(s.conv(x))), 1)
m = Tiny().eval()
x = torch.randn(1, 3, 32, 32)
torch.onnx.export(m, x, "/root/proj/tests/fixtures/tiny_backbone.onnx", input_names=["input"], output_names=["embedding"], opset_version=11, dynamo=False)
# oracle image 32x32
rng = np.random.default_rng(3)
img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
cv2.imwrite("/root/proj/tests/fixtures/tiny_crop.png", img)
rgb = img[:, :, ::-1].astype(np.float32) / 255.0
mean = np.array([0.485, 0.456, 0.406], np.float32); std = np.array([0.229, 0.224, 0.225], np.float32)
t = torch.from_numpy(((rgb - mean) / std).transpose(2, 0, 1).copy())[None]
with torch.no_grad(): out = m(t)[0].numpy()
open("/root/proj/tests/fixtures/tiny_backbone_expected.txt","w").write(",".join(repr(float(v)) for v in out) + "\n")
