// Error taxonomy mirroring the primary toolkit; CLI failures surface with
// the primary error name preserved in `name`.

export class LidarUdaError extends Error {
  constructor(name: string, message: string) {
    super(message);
    this.name = name;
  }
}

export class CorruptFile extends LidarUdaError {
  constructor(message: string) {
    super("CorruptFile", message);
  }
}

export class EmptyInput extends LidarUdaError {
  constructor(message: string) {
    super("EmptyInput", message);
  }
}

export class ShapeMismatch extends LidarUdaError {
  constructor(message: string) {
    super("ShapeMismatch", message);
  }
}
