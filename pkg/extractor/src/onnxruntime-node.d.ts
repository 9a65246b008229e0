// Optional runtime dependency, loaded dynamically when an ONNX backbone is
// requested; typed as any so the package builds without it installed.
declare module "onnxruntime-node";
