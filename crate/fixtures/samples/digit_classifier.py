import ...

model_path = constants.MODEL_DIGIT_RECOGNITION_PATH
model = tf.keras.models.load_model(model_path,
                                    compile=False)

class ClassifyDigits(interfaces.IClassifyDigits):
    def __call__(self, images: NDArray) -> NDArray[np.int_]:

        images = images / 255.0                 
        images = images.reshape(-1, 28 * 28)   

        predictions = model.predict(images)
        return np.array([int(np.argmax(prediction)) for prediction in predictions])

if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("image_path", type=str)

    args = parser.parse_args()
    x=PIL.Image.open(args.image_path).convert('L').
        resize((28, 28))
    images = np.array(x)
    print(ClassifyDigits()(images=images))
    
